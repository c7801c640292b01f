//! On-disk transform maps, tagged by `kind`.

use std::path::Path;

use pinn_observer::expr::parse;
use pinn_observer::pinn::TrainedMap;
use pinn_observer::series::PolyMap;
use pinn_observer::transform::{ExprMap, TransformMap};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MapFile {
    Pinn(TrainedMap),
    Series(PolyMap),
    /// Closed-form components over `x1..xn`.
    Expr { components: Vec<String> },
}

impl MapFile {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("map file serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<MapFile, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    pub fn into_transform(self, n: usize) -> Result<Box<dyn TransformMap>, CliError> {
        let map: Box<dyn TransformMap> = match self {
            MapFile::Pinn(m) => Box::new(m),
            MapFile::Series(m) => Box::new(m),
            MapFile::Expr { components } => {
                let exprs = components
                    .iter()
                    .map(|t| parse(t, components.len()))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| CliError::usage(format!("map component: {e}")))?;
                Box::new(ExprMap::new(components.len(), exprs).map_err(|e| CliError::usage(e.to_string()))?)
            }
        };
        if map.dim() != n {
            return Err(CliError::usage(format!(
                "map has dimension {} but the problem has {n} states",
                map.dim()
            )));
        }
        Ok(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pinn_observer::mlp::{init_random, MlpConfig};

    #[test]
    fn pinn_round_trip_is_exact() {
        let cfg = MlpConfig::default_for(2);
        let m = MapFile::Pinn(TrainedMap::new(cfg, init_random(&cfg, 3)).unwrap());
        let text = m.to_json();
        assert!(text.contains("\"kind\": \"pinn\""));
        let back: MapFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn expr_map_checks_dimension() {
        let m = MapFile::Expr {
            components: vec!["x1".into(), "x1+x2".into()],
        };
        assert_eq!(m.clone().into_transform(2).unwrap().eval(&[1.0, 2.0]).unwrap(), vec![1.0, 3.0]);
        assert_eq!(m.into_transform(3).err().unwrap().code, 1);
    }
}
