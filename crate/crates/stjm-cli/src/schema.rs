//! Sidecar schema file declaring feature kinds and categorical levels.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

use stjm::{Feature, FeatureSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaFile {
    pub features: Vec<SchemaFeature>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SchemaFeature {
    Continuous { name: String },
    Categorical { name: String, levels: Vec<String> },
}

impl SchemaFeature {
    pub fn name(&self) -> &str {
        match self {
            SchemaFeature::Continuous { name } => name,
            SchemaFeature::Categorical { name, .. } => name,
        }
    }
}

impl SchemaFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read schema file {}", path.display()))?;
        let schema: SchemaFile = serde_json::from_str(&text)
            .with_context(|| format!("invalid schema file {}", path.display()))?;
        if schema.features.is_empty() {
            bail!("schema file {} declares no features", path.display());
        }
        Ok(schema)
    }

    pub fn to_feature_spec(&self) -> Result<FeatureSpec> {
        let features = self
            .features
            .iter()
            .map(|f| match f {
                SchemaFeature::Continuous { name } => Feature::continuous(name.clone()),
                SchemaFeature::Categorical { name, levels } => {
                    Feature::categorical(name.clone(), levels.clone())
                }
            })
            .collect();
        FeatureSpec::new(features).context("invalid feature spec")
    }

    pub fn from_feature_spec(spec: &FeatureSpec) -> Self {
        SchemaFile {
            features: spec
                .features()
                .iter()
                .map(|f| match &f.kind {
                    stjm::FeatureKind::Continuous => SchemaFeature::Continuous {
                        name: f.name.clone(),
                    },
                    stjm::FeatureKind::Categorical { levels } => SchemaFeature::Categorical {
                        name: f.name.clone(),
                        levels: levels.clone(),
                    },
                })
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)
            .with_context(|| format!("cannot write schema file {}", path.display()))?;
        Ok(())
    }
}
