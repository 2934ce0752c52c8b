# setup.py
from setuptools import setup, find_packages

version = '0.1.0'

setup(name='jaggedfsi',
      version=version,
      description='Explicit Robin-Neumann FSI coupling with jagged time steps',
      install_requires=['numpy', 'scipy', 'sqlalchemy>=1.4'],
      extras_require={'test': ['pytest']},
      packages=find_packages(exclude=['tests']),
      include_package_data=True,
      zip_safe=False,
      entry_points={
          'console_scripts': ['fsi = jaggedfsi.cli:main'],
      },
)
