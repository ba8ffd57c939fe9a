import numpy
from setuptools import Extension, setup
from Cython.Build import cythonize

# The compiled kernel core is optional at runtime (tbf.kernels falls back to
# the numpy implementation if the import fails) but is built by default.
extensions = [
    Extension(
        "tbf.kernels._bilateral_cy",
        ["src/tbf/kernels/_bilateral_cy.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3", "-fopenmp"],
        extra_link_args=["-fopenmp"],
    )
]

setup(ext_modules=cythonize(extensions, language_level=3))
