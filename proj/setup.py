import glob

from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup

ext_modules = [
    Pybind11Extension(
        "bcgan._core",
        sorted(glob.glob("src/*.cpp")) + ["python/bindings.cpp"],
        include_dirs=["include", "vendor", "/usr/include/eigen3"],
        cxx_std=20,
    ),
]

setup(ext_modules=ext_modules, cmdclass={"build_ext": build_ext})
