from setuptools import setup, find_packages

setup(
    name='swarmlab.swarmsim',
    namespace_packages=['swarmlab'],
    version='0.0.1',
    description=(
        'Deterministic simulation of quadrotor swarms: formation control with '
        'distributed estimation and distributed trajectory optimization '
        'through a ring'
    ),
    entry_points={
        "gui_scripts": [],
        "console_scripts": [
            'swarmsim = swarmlab.swarmsim.app.cli:cli',
        ],
    },
    packages=[
        'swarmlab.swarmsim',
        'swarmlab.swarmsim.app',
        'swarmlab.swarmsim.lib',
        'swarmlab.swarmsim.lib.trajopt'
    ],
    zip_safe=False,
    package_data={},
    install_requires=[
        'Click',
        'numpy',
        'scipy'
    ],
    tests_require=['pytest', 'pytest-cov'],
)
