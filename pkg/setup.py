from setuptools import Extension, setup

# The compiled kernels are optional: tilekit falls back to a numpy lane when
# the extension is unavailable (see tilekit/_core_fallback.py).
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("tilekit._core", ["src/tilekit/_core.pyx"],
                   extra_compile_args=["-O3"])],
        language_level=3,
        compiler_directives={"boundscheck": False, "wraparound": False},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
