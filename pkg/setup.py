from setuptools import setup, find_packages
import flagforge  # In order to extract the version number

# Get the long description
# If possible, use pypandoc to convert the README from Markdown
# to reStructuredText, as this is the only supported format on PyPI
try:
    import pypandoc
    long_description = pypandoc.convert('./README.md', 'rst')
except (ImportError, RuntimeError):
    long_description = open('./README.md').read()
# Get the package requirements from the requirements.txt file
with open('./requirements.txt') as f:
    install_requires = [line.strip('\n') for line in f.readlines()]

# Main setup command
setup(name='flagforge',
      version=flagforge.__version__,
      description='Multi-objective compiler autotuning workbench',
      long_description=long_description,
      license='BSD-3-Clause',
      packages=find_packages('./', exclude=['tests']),
      package_data={'flagforge': ['data/flagspaces/*.json',
                                  'data/workloads/*/*']},
      entry_points={'console_scripts':
                    ['flagforge=flagforge.cli.main:main']},
      install_requires=install_requires,
      python_requires='>=3.7',
      tests_require=['pytest'],
      setup_requires=['pytest-runner'],
      platforms='any',
      classifiers=[
          'Programming Language :: Python',
          'Development Status :: 4 - Beta',
          'Natural Language :: English',
          'Environment :: Console',
          'Intended Audience :: Science/Research',
          'Operating System :: POSIX',
          'Topic :: Software Development :: Compilers',
          'Topic :: Scientific/Engineering',
          'Programming Language :: Python :: 3.7',
          'Programming Language :: Python :: 3.8'],
      )
