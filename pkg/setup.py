import numpy
from setuptools import setup

try:
    from Cython.Build import cythonize
    from setuptools import Extension
except ImportError:  # pure-Python install
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "skyconsensus.simulator._engine_c",
                ["src/skyconsensus/simulator/_engine_c.pyx"],
                include_dirs=[numpy.get_include()],
                language="c++",
                # no fast-math / fp contraction: results must match the Python loop bit-for-bit
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
