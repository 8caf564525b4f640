use crate::clustering::ClusterModel;
use crate::error::{Error, Result};
use crate::features::{FeatureKind, LlmFeature};

use super::{clamp_unit, Descriptor, GammaEstimator, PoolEntry};

/// `gamma(x, h) = Psi(h)[assign(x)]`: the one-hot cluster indicator of the
/// prompt dotted with the LLM's per-cluster errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterGamma {
    model: ClusterModel,
}

pub fn cluster_gamma(model: ClusterModel) -> ClusterGamma {
    ClusterGamma { model }
}

impl ClusterGamma {
    pub fn model(&self) -> &ClusterModel {
        &self.model
    }

    fn lookup(&self, cluster: usize, feature: &LlmFeature) -> Result<f64> {
        if !matches!(feature.kind, FeatureKind::ClusterError | FeatureKind::BtlCluster) {
            return Err(Error::Argument(format!(
                "cluster router needs a per-cluster feature, {:?} is {}",
                feature.llm_id,
                feature.kind.as_str()
            )));
        }
        if feature.len() != self.model.k {
            return Err(Error::Argument(format!(
                "feature {:?} has {} entries, cluster model has k = {}",
                feature.llm_id,
                feature.len(),
                self.model.k
            )));
        }
        Ok(clamp_unit(feature.values[cluster]))
    }
}

impl GammaEstimator for ClusterGamma {
    fn descriptor(&self) -> Descriptor {
        Descriptor {
            kind: "cluster".into(),
            params: vec![("k".into(), self.model.k as f64)],
        }
    }

    fn gamma(&self, x: &[f64], feature: &LlmFeature) -> Result<f64> {
        let cluster = self.model.assign(x)?;
        self.lookup(cluster, feature)
    }

    fn gamma_pool(&self, x: &[f64], pool: &[PoolEntry]) -> Result<Vec<f64>> {
        let cluster = self.model.assign(x)?;
        pool.iter().map(|e| self.lookup(cluster, &e.feature)).collect()
    }
}
