"""Build the optional compiled kernels; the package falls back to numpy without them."""
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # no compiler or no Cython
            print(f"warning: compiled kernels not built ({exc}); using numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: failed to build {ext.name} ({exc}); using numpy fallback")


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension("partsync._ckernels", ["src/partsync/_ckernels.pyx"],
                    extra_compile_args=["-O3"])
    return cythonize([ext], language_level=3, quiet=True)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
