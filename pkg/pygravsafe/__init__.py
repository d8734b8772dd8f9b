""" Learn small-body gravity fields from trajectory data, and characterize the safety and robustness of the models """

__version__ = '0.1.0'
__author__ = 'pygravsafe developers'
__all__ = ['gravity', 'dynamics', 'data', 'gp', 'nn', 'optim', 'characterization', 'pipeline', 'config']
