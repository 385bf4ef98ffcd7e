use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{GradTargets, ModelBundle, ModelError, Owner, ParamGroup, ParamInfo, StepPlan};
use crate::tensor_core::{Mode, Real};

/// Which parameters a training run may change.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Scratch,
    HeadOnly,
    AdaptersAndHead,
    SharedMultidomain,
}

impl Regime {
    pub const ALL: [Regime; 4] = [
        Regime::Scratch,
        Regime::HeadOnly,
        Regime::AdaptersAndHead,
        Regime::SharedMultidomain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Scratch => "scratch",
            Regime::HeadOnly => "head_only",
            Regime::AdaptersAndHead => "adapters_and_head",
            Regime::SharedMultidomain => "shared_multidomain",
        }
    }

    /// Whether a parameter of domain `domain` is trainable under this regime.
    pub fn selects(self, info: &ParamInfo, domain: &str) -> bool {
        let own = info.owner == Owner::Domain(domain.to_string());
        match self {
            Regime::Scratch | Regime::SharedMultidomain => own || info.owner == Owner::Shared,
            Regime::HeadOnly => own && info.group == ParamGroup::Head,
            Regime::AdaptersAndHead => own,
        }
    }

    /// Step plan matching the mask. A frozen backbone runs its batch norms
    /// on running statistics so that their buffers stay untouched too.
    pub fn step_plan(self) -> StepPlan {
        match self {
            Regime::Scratch | Regime::SharedMultidomain => StepPlan::full(),
            Regime::HeadOnly => StepPlan {
                backbone_mode: Mode::Eval,
                grads: GradTargets {
                    shared: false,
                    domain_backbone: false,
                    head: true,
                },
                ..StepPlan::full()
            },
            Regime::AdaptersAndHead => StepPlan {
                grads: GradTargets {
                    shared: false,
                    domain_backbone: true,
                    head: true,
                },
                ..StepPlan::full()
            },
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Regime::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown regime {s:?}"))
    }
}

/// Names of the trainable parameters of one regime and domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainableMask {
    pub regime: Regime,
    pub domain: String,
    pub names: BTreeSet<String>,
    pub param_count: usize,
}

impl TrainableMask {
    pub fn contains(&self, name: &str) -> bool {
        self.names.contains(name)
    }
}

pub fn trainable_mask<T: Real>(bundle: &ModelBundle<T>, regime: Regime, domain: &str) -> Result<TrainableMask, ModelError> {
    bundle.domain(domain)?;
    let mut names = BTreeSet::new();
    let mut param_count = 0;
    for (info, t) in bundle.params() {
        if regime.selects(&info, domain) {
            param_count += t.numel();
            names.insert(info.name);
        }
    }
    Ok(TrainableMask {
        regime,
        domain: domain.to_string(),
        names,
        param_count,
    })
}
