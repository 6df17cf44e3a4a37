from setuptools import setup
from setuptools import find_packages


def readme():
    with open('README.md', encoding='utf-8') as file:
        return file.read()

setup(
    name='mis',
    version='0.1.0',
    description='A cloud-style mesh of multimodal interaction services: recognition, fusion, interpretation, fission',
    long_description=readme(),
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Natural Language :: English',
        'Programming Language :: Python :: 3.9',
        'Topic :: Scientific/Engineering :: Human Machine Interfaces'
    ],
    keywords='multimodal interaction fusion fission speech gesture service registry broker autoscaling',

    include_package_data=True,
    package_data={'mis.data': ['*.json', '*.jsonl']},
    packages=find_packages(exclude=['tests']),
    zip_safe=False,

    test_suite='pytest-runner',
    setup_requires=['pytest'],

    install_requires=[
        'ujson'
    ],

    entry_points={
        'console_scripts': ['mis=mis.cli:main'],
    }
)
