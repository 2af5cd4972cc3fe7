"""Printed coefficient tables for the interpolated schemes.

Rows are kept as text so that exported tables reproduce the printed digits
exactly.  Columns: 1/G, then (value, d/d(1/G)) per parameter.
"""

IOFD_2D = """
0.00  0.702988  0.009776  0.260661 -0.017374  0.833321 -0.000611
0.05  0.705833 -0.009915  0.253348 -0.046566  0.832408 -0.036116
0.10  0.704294 -0.053006  0.251395 -0.029803  0.829828 -0.066179
0.15  0.700617 -0.097783  0.250099 -0.016222  0.825956 -0.087744
0.20  0.694664 -0.144215  0.249306 -0.010052  0.821312 -0.096545
0.25  0.686959 -0.169986  0.247309 -0.061204  0.817120 -0.066627
0.30  0.677167 -0.227359  0.243807 -0.072388  0.815138 -0.008931
0.35  0.664000 -0.306018  0.239969 -0.074632  0.816970  0.085964
0.40  0.645668 -0.434744  0.237317 -0.026502  0.823706  0.183724
"""

IOFD_3D = """
0.0000  0.635413 -0.000228  0.210638  0.016303  0.172254 -0.014072  0.710633 -0.006278  0.245303  0.019576
0.0500  0.635102 -0.015578  0.210152 -0.023424  0.171912 -0.005802  0.709821 -0.047764  0.245148  0.021398
0.1000  0.634166 -0.034804  0.208167 -0.043396  0.171146 -0.012462  0.707374 -0.070981  0.244762  0.007493
0.1500  0.632093 -0.054496  0.205348 -0.065935  0.170031 -0.022145  0.703359 -0.088202  0.245160  0.009937
0.2000  0.628341 -0.103457  0.201605 -0.069385  0.169740  0.001893  0.698813 -0.092327  0.245687  0.012201
0.2500  0.622526 -0.133896  0.197423 -0.098212  0.169475 -0.002559  0.694726 -0.066617  0.246454  0.016791
0.3000  0.614611 -0.183988  0.192414 -0.115398  0.168690 -0.005589  0.692615 -0.011177  0.247743  0.029213
0.3500  0.603680 -0.255991  0.186819 -0.120930  0.167581 -0.015564  0.694109  0.077605  0.250098  0.059733
0.4000  0.588498 -0.356326  0.180737 -0.132266  0.166640 -0.001852  0.700902  0.199685  0.254352  0.106049
"""

Q_2D = """
0.00  0.872589 -0.115476  0.088139  0.232493
0.05  0.870989 -0.080799  0.089351  0.080994
0.10  0.866560 -0.122182  0.092018  0.075452
0.15  0.858994 -0.189920  0.096178  0.106183
0.20  0.847495 -0.277477  0.102309  0.147420
0.25  0.830913 -0.394429  0.110797  0.198380
0.30  0.807375 -0.559277  0.122158  0.261263
0.35  0.773715 -0.806746  0.137030  0.337561
0.40  0.724163 -1.211119  0.155971  0.420753
"""

Q_3D = """
0.0000  0.806683  0.002423  0.193113 -0.002685 -0.056266 -0.002551
0.0500  0.832963 -0.081724  0.114016  0.032813  0.020075  0.058590
0.1000  0.841034 -0.130484  0.076623  0.029868  0.061360  0.078398
0.1500  0.833587 -0.231333  0.076280  0.129614  0.067935  0.024410
0.2000  0.821230 -0.304691  0.078943  0.086321  0.074389  0.130587
0.2500  0.803736 -0.416375  0.081855  0.072002  0.084073  0.220607
0.3000  0.779384 -0.573760  0.084646  0.054207  0.098065  0.329810
0.3500  0.745468 -0.801027  0.086156  0.004734  0.118341  0.486328
0.4000  0.697405 -1.148951  0.083351 -0.136764  0.148391  0.732785
"""

RAW = {
    "iofd2d": IOFD_2D,
    "iofd3d": IOFD_3D,
    "q2d": Q_2D,
    "q3d": Q_3D,
}


def rows(name):
    """Split a printed table into rows of string tokens."""
    return [line.split() for line in RAW[name].strip().splitlines()]
