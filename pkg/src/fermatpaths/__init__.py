"""Sample Fermat distances, their continuum limit and Monte Carlo checks."""

__version__ = "0.1.0"

from .geometry import (FermatPath, GeometryError, PointCloud, SpatialIndex, build_index,
                       curve_distance, knn, load_cloud_csv, resample_polyline, save_cloud_csv,
                       voronoi_anchor)
from .sampling import (DensityField, DomainSpec, ManifoldSpec, Provenance, SampleBatch,
                       SamplingError, rng_stream, sample_iid, sample_manifold, sample_poisson)
from .catalog import (CatalogError, make_density, make_domain, make_manifold, swiss_roll,
                      two_value, uniform, unit_box)
from .core import (DistanceResult, FermatError, KnnGraph, LandmarkBounds, Unreachable,
                   all_pairs_restricted, beta_for, build_knn_graph, distances_from_sources,
                   exact_distance, fermat_ball, landmark_bounds, path_statistics,
                   restricted_distance)
from .continuum import (Beta, ContinuumResult, GridOracle, OracleError, OracleUnreachable,
                        build_grid_oracle, continuum_ball, continuum_distance, continuum_geodesic)
from .experiments import (ConfigError, ConvergenceRecord, ExperimentConfig, ExperimentResult,
                          ShapeError, estimate_mu, run_convergence, run_geodesic_convergence,
                          run_knn_sufficiency, run_manifold, run_shape)
