from setuptools import setup, find_packages


with open('README.md') as f:
    readme = f.read()

setup(
    name='bsbu',
    version='0.1.0',
    description=('Least-squares Monte Carlo by backward simulation with '
                 'shape-preserving sieve regression'),
    long_description=readme,
    packages=find_packages(exclude=('test', 'doc')),
    install_requires=[
        'numpy>=1.17',
        'scipy>=1.1',
        'pandas>=1.5',
        'matplotlib',
        'seaborn>=0.11',
        'pyyaml>=5.1',
    ],
    entry_points={
        'console_scripts': ['solve=bsbu.cli:main'],
    },
)
