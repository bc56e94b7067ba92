"""Build script for the optional compiled iteration kernels.

The package is fully functional without the extension; ``vgne._kernels``
falls back to the pure-numpy implementation when the compiled module is
absent.  The extension is marked optional so an environment without a C
toolchain can still install the package.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover - build-time guard
    ext_modules = []
else:
    ext = Extension(
        "vgne._kernels._cyloops",
        sources=["src/vgne/_kernels/_cyloops.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
    ext.optional = True
    ext_modules = cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )

setup(ext_modules=ext_modules)
