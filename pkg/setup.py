# Always prefer setuptools over distutils
from setuptools import setup, find_packages

# To use a consistent encoding
from codecs import open
from os import path

here = path.abspath(path.dirname(__file__))

# Get the long description from the README file
with open(path.join(here, 'README.md'), encoding='utf-8') as f:
    long_description = f.read()


setup(

    name='python-nvsim',  # Required
    version='0.1.0',  # Required
    description='Simulation library and command line for NV-center spin and optical experiments.',  # Required
    long_description=long_description,  # Optional
    long_description_content_type="text/markdown",

    classifiers=[  # Optional
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering :: Physics',

        'License :: OSI Approved :: GNU General Public License v2 or later (GPLv2+)',

        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
        'Programming Language :: Python :: 3.12'
    ],

    keywords='nv center diamond odmr spin quantum optics simulation',  # Optional

    packages=find_packages(exclude=['tests']),  # Required

    python_requires='>=3.9',

    install_requires=[
        'numpy',
        'scipy',
        'untangle',
        'nest_asyncio'
        ],  # Optional

    extras_require={  # Optional
        'test': ['pytest'],
    },

    entry_points={  # Optional
        'console_scripts': [
            'nvsim=nvsim.cli:main',
        ],
    },
)
