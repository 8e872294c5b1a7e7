from Cython.Build import cythonize
from setuptools import Extension, setup

# The Jacobi kernels are optional at runtime: metarep.linalg falls back to a
# numpy implementation when the extension is missing.
extensions = [
    Extension(
        "metarep.linalg._jacobi",
        ["src/metarep/linalg/_jacobi.pyx"],
        extra_compile_args=["-O3"],
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}),
)
