# !/usr/bin/env python
# -*- coding: utf-8 -*-

from setuptools import setup, find_packages


README = ''
with open('README.rst', encoding="utf-8") as f:
    README = f.read()

INSTALL_REQUIRES = [
    'numpy', 'pandas', 'plotly', 'pyarrow', 'python-dotenv', 'pyyaml',
    'scipy', 'pillow', 'tabulate',
]
TEST_REQUIRES = [
    # testing and coverage
    'pytest', 'pytest-mock', 'hypothesis', 'coverage', 'pytest-cov',
]


setup(
        name='mveval',
        description="Multiview inference evaluation harness for melanoma classifiers",
        long_description=README,
        long_description_content_type='text/x-rst',
        author="Amihai Offenbacher",
        author_email="amihaio@gmail.com",
        packages=find_packages(exclude=['tests', 'tests.*']),
        install_requires=INSTALL_REQUIRES,
        extras_require={
            'test': TEST_REQUIRES
        },
        entry_points={
            'console_scripts': ['mveval=mveval.main:main'],
        },
        platforms=['any'],
        keywords='test-time augmentation, calibration, bootstrap, dermoscopy',
        classifiers=[],
)
