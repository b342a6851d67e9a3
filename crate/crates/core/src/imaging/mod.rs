//! Raster smoothing, second derivatives, curviness saliency and contour extraction.

pub mod contour;
pub mod saliency;
pub mod smooth;

pub use contour::{
    contours_from_edges, edge_map, extract_contours, extract_linked_contours, Contour,
    DEFAULT_LINK_RADIUS, MIN_CONTOUR_POINTS,
};
pub use saliency::{
    curviness_saliency, hessian, multiscale_cs, principal_direction, CurvinessField, HessianField,
};
pub use smooth::gaussian_smooth;
