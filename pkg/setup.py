import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("LPBF_TWIN_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    name,
                    [src],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
                for name, src in (
                    ("lpbf_twin.meltpool._stencil", "src/lpbf_twin/meltpool/_stencil.pyx"),
                    ("lpbf_twin.fno._act", "src/lpbf_twin/fno/_act.pyx"),
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
