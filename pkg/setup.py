"""Setup script for posetplan."""

from setuptools import setup, find_packages
from pathlib import Path

# Read README for long description
readme_file = Path(__file__).parent / "README.md"
long_description = readme_file.read_text() if readme_file.exists() else ""

setup(
    name="posetplan",
    version="0.1.0",
    description="Minimum-time task allocation for heterogeneous multi-agent teams under collaborative sc-LTL tasks",
    long_description=long_description,
    long_description_content_type="text/markdown",
    author="posetplan contributors",
    packages=find_packages(exclude=["tests", "tests.*"]),
    include_package_data=True,
    package_data={
        'posetplan': ['scenarios/*.json', 'scenarios/*.hoa'],
    },
    install_requires=[
        "click>=8.1.0",
        "rich>=13.0.0",
        "pyyaml>=6.0",
        "networkx>=3.0",
        "pyparsing>=3.1.0",
    ],
    entry_points={
        'console_scripts': [
            'posetplan=posetplan.cli:cli',
        ],
    },
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Artificial Intelligence",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
    ],
    python_requires=">=3.8",
)
