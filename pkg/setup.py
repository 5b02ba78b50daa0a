# setup.py
"""
Setup script for fdfnet, two-stage STFT/STDCT speech enhancement
"""
from setuptools import find_packages, setup

setup(
    name="fdfnet",
    version="0.1.0",
    description="Causal two-stage speech enhancement: STFT magnitude estimation then STDCT spectrum refinement",
    python_requires=">=3.9",
    packages=find_packages(include=["fdfnet", "fdfnet.*"]),
    install_requires=[
        "numpy>=1.21.0",
        "numba>=0.56.0",
        "scipy>=1.8.0",
        "pandas>=1.4.0",
        "soundfile>=0.11.0",
    ],
    extras_require={
        "test": ["pytest>=7.0"],
    },
    entry_points={
        "console_scripts": ["fdfnet=fdfnet.cli:main"],
    },
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Topic :: Multimedia :: Sound/Audio :: Analysis",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
    ],
    zip_safe=False,
)
