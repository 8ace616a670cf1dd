#!/usr/bin/env python3
"""
owi-sim Setup Configuration
Four-level rubidium vapour simulator for gain without population inversion
"""

from setuptools import setup, find_packages

# Read the README file for the long description
with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

# Read requirements
with open("requirements.txt", "r", encoding="utf-8") as fh:
    requirements = [line.strip() for line in fh if line.strip() and not line.startswith("#")]

setup(
    name="owi-sim",
    version="0.1.0",
    description="Density-matrix simulator of gain without inversion in rubidium vapour cells",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests*", "examples*"]),
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Topic :: Scientific/Engineering :: Physics",
        "Environment :: Console",
    ],
    python_requires=">=3.10",
    install_requires=requirements,
    extras_require={
        "dev": [
            "pytest>=7.0.0",
        ],
        "plot": [
            "matplotlib>=3.5",
        ],
    },
    entry_points={
        "console_scripts": [
            "owi-sim=shell.owi_shell:main_entry",
        ],
    },
    include_package_data=True,
    package_data={
        "parser": ["*.lark"],
        "presets": ["*.conf"],
    },
    keywords=[
        "density matrix",
        "optical bloch equations",
        "gain without inversion",
        "rubidium",
        "doppler broadening",
    ],
    zip_safe=False,
    platforms=["any"],
)
