//! Transform networks and the weight archive they load from.

pub mod blocks;
pub mod config;
pub mod networks;
pub mod weights;

pub use config::{BlockKind, StageConfig, TransformConfig};
pub use networks::{ContextModel, FactorizedPrior, Networks, GROUPS, SIGMA_MAX, SIGMA_MIN};
pub use weights::{Init, ModelId, ParamSource, RandomSource, SchemaRecorder, StoreSource, WeightStore};
