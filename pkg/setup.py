from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

# -ffp-contract=off: the kernels must perform plain IEEE multiply-then-add so
# that compiled and pure-Python backends produce bit-identical results.
extensions = [
    Extension(
        "privagg._kernels",
        ["src/privagg/_kernels.pyx"],
        extra_compile_args=["-O3", "-ffp-contract=off"],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"})
    if cythonize
    else [],
)
