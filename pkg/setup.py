import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("SNAPVERIFY_NO_EXT", "") != "1":
    try:
        from Cython.Build import cythonize
        import numpy as np
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [Extension("snapverify.solver._simplex_core",
                       ["src/snapverify/solver/_simplex_core.pyx"],
                       include_dirs=[np.get_include()],
                       extra_compile_args=["-O3"])],
            language_level=3,
        )

setup(ext_modules=ext_modules)
