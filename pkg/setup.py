from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "hbvm._kernels",
                ["src/hbvm/_kernels.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # Cython unavailable: install the pure-Python package; the kernel
    # selector falls back to the numpy implementation at import time.
    ext_modules = []

setup(ext_modules=ext_modules)
