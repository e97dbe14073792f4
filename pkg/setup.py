from setuptools import setup, find_packages

setup(
    name='GridPrice',
    version='0.1.0',
    packages=find_packages(include=['gridprice', 'gridprice.*']),
    package_data={'gridprice': ['data/default/*.json',
                                'data/default/*.csv']},
    url='',
    license='LICENSE.txt',
    description='Tiered electricity pricing for load balancing of '
    'geo-distributed data centers',
    long_description=open('README.md').read(),
    python_requires='>=3.8',
    install_requires=[
        "numpy >= 1.17",
        "scipy >= 1.4",
        "sympy >= 1.5",
        "matplotlib >= 3.1",
        "pandas >= 1.0",
    ],
    extras_require={
        'tests': ["pytest >= 6"],
    },
    entry_points={
        'console_scripts': [
            'gridprice = gridprice.experiments.cli:console_main',
        ],
    },
)
