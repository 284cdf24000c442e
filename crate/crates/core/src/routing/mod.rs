//! On-demand multipath distance-vector routing.

pub mod message;
pub mod table;

mod aomdv;

pub use message::{Alert, ControlKind, ControlMessage, Rerr, Rrep, Rreq};
pub use table::{filter_paths, select_path, NoPath, PathAlternative, RouteEntry, RouteUpdate, RoutingTable};
