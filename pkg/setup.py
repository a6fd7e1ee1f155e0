"""Build script for the optional compiled kernel extension.

The package is fully functional without the extension; tnn._backend falls
back to the numpy implementation when the compiled module is absent.
Cython regenerates the C when available; otherwise the checked-in
_kernels_c.c is compiled as-is.
"""

from setuptools import Extension, setup

try:
    import numpy
except ImportError:
    ext_modules = []
else:

    def kernel_ext(source: str) -> Extension:
        return Extension(
            "tnn._kernels_c",
            [source],
            include_dirs=[numpy.get_include()],
            extra_compile_args=["-O3"],
            optional=True,
        )

    try:
        from Cython.Build import cythonize
    except ImportError:
        ext_modules = [kernel_ext("src/tnn/_kernels_c.c")]
    else:
        ext_modules = cythonize([kernel_ext("src/tnn/_kernels_c.pyx")], language_level=3)

setup(ext_modules=ext_modules)
