"""Street-footage happiness census.

Modules:

- ``imageio``: binary PGM/PPM I/O, grayscale, resize, crop
- ``tensorcore``: layers, backprop, SGD and weight files for the CNN
- ``facedetect``: HOG sliding-window face detector with NMS
- ``emotion``: FER-2013 loading and the 7-class emotion CNN
- ``census``: per-city counting pipeline and census CSV
- ``stats``: proportion intervals, homogeneity tests, SVG report
"""

from .emotion import EMOTIONS

__version__ = "0.1.0"
__all__ = ["EMOTIONS", "__version__"]
