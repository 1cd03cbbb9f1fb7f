from setuptools import Extension, setup
from Cython.Build import cythonize
import numpy

# Compiled event-loop kernels. Keep IEEE semantics (no -ffast-math): the pure
# NumPy fallback must agree with these to tight tolerances and the thinning
# sampler must consume the RNG stream identically on both backends.
extensions = [
    Extension(
        "blockhawkes._ckernels",
        sources=["src/blockhawkes/_ckernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
)
