use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::buffers::MappingPolicy;
use crate::error::{Error, Result};
use crate::tree::MAX_HEIGHT;

/// Accelerator organisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// One partition per level, two keys per cycle.
    Hrz,
    /// `replicas` full tree copies, each horizontally partitioned.
    Dup { replicas: usize },
    /// Register layer over `subtrees` vertically split subtrees, with
    /// staging buffers in front of each subtree.
    Hyb { subtrees: usize, policy: MappingPolicy },
}

impl Variant {
    /// Keys fetched per cycle: the most searches that can start in parallel.
    pub fn chunk_size(&self) -> usize {
        match *self {
            Variant::Hrz => 2,
            Variant::Dup { replicas } => 2 * replicas,
            Variant::Hyb { subtrees, .. } => 2 * subtrees,
        }
    }

    pub fn replicas(&self) -> usize {
        match *self {
            Variant::Dup { replicas } => replicas,
            _ => 1,
        }
    }

    pub fn subtrees(&self) -> Option<usize> {
        match *self {
            Variant::Hyb { subtrees, .. } => Some(subtrees),
            _ => None,
        }
    }

    pub fn policy(&self) -> Option<MappingPolicy> {
        match *self {
            Variant::Hyb { policy, .. } => Some(policy),
            _ => None,
        }
    }

    pub fn is_hybrid(&self) -> bool {
        matches!(self, Variant::Hyb { .. })
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Variant::Hrz => Ok(()),
            Variant::Dup { replicas } if replicas >= 2 => Ok(()),
            Variant::Dup { replicas } => Err(Error::config(format!(
                "dup needs at least 2 replicas, got {replicas}"
            ))),
            Variant::Hyb { subtrees, .. } if subtrees >= 2 && subtrees.is_power_of_two() => Ok(()),
            Variant::Hyb { subtrees, .. } => Err(Error::config(format!(
                "hyb subtree count must be a power of two >= 2, got {subtrees}"
            ))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Variant::Hrz => write!(f, "hrz"),
            Variant::Dup { replicas } => write!(f, "dup{replicas}"),
            Variant::Hyb {
                subtrees,
                policy: MappingPolicy::Direct,
            } => write!(f, "hyb{subtrees}"),
            Variant::Hyb {
                subtrees,
                policy: MappingPolicy::Queue,
            } => write!(f, "hyb{subtrees}q"),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    /// Accepts `hrz`, `dup<n>`, `hyb<T>` (direct mapping) and `hyb<T>q`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let number = |digits: &str| {
            digits.parse::<usize>().map_err(|_| {
                Error::config(format!(
                    "unknown variant '{s}' (expected hrz, dup<n>, hyb<T> or hyb<T>q)"
                ))
            })
        };
        let variant = if lower == "hrz" {
            Variant::Hrz
        } else if let Some(n) = lower.strip_prefix("dup") {
            Variant::Dup { replicas: number(n)? }
        } else if let Some(rest) = lower.strip_prefix("hyb") {
            let (digits, policy) = match rest.strip_suffix('q') {
                Some(d) => (d, MappingPolicy::Queue),
                None => (rest, MappingPolicy::Direct),
            };
            Variant::Hyb {
                subtrees: number(digits)?,
                policy,
            }
        } else {
            return Err(Error::config(format!(
                "unknown variant '{s}' (expected hrz, dup<n>, hyb<T> or hyb<T>q)"
            )));
        };
        variant.validate()?;
        Ok(variant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EngineConfig {
    pub variant: Variant,
    pub tree_height: u32,
    /// Levels held in registers. Fixed at log2(T) for hybrids; optional for
    /// Hrz/Dup, where it changes BRAM accounting but not throughput.
    pub reg_levels: u32,
    pub buffer_slots: usize,
}

impl EngineConfig {
    pub fn new(variant: Variant, tree_height: u32) -> Result<Self> {
        let reg_levels = match variant {
            Variant::Hyb { subtrees, .. } => subtrees.trailing_zeros(),
            _ => 0,
        };
        let config = EngineConfig {
            variant,
            tree_height,
            reg_levels,
            buffer_slots: variant.chunk_size(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_reg_levels(mut self, reg_levels: u32) -> Result<Self> {
        self.reg_levels = reg_levels;
        self.validate()?;
        Ok(self)
    }

    pub fn with_buffer_slots(mut self, slots: usize) -> Result<Self> {
        self.buffer_slots = slots;
        self.validate()?;
        Ok(self)
    }

    pub fn chunk_size(&self) -> usize {
        derive_chunk_size(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.variant.validate()?;
        if self.tree_height > MAX_HEIGHT {
            return Err(Error::config(format!(
                "tree height {} out of range 0..={MAX_HEIGHT}",
                self.tree_height
            )));
        }
        if self.reg_levels > self.tree_height {
            return Err(Error::config(format!(
                "{}: {} register levels exceed tree height {}",
                self.variant, self.reg_levels, self.tree_height
            )));
        }
        if let Variant::Hyb { subtrees, policy } = self.variant {
            if 1usize << self.reg_levels != subtrees {
                return Err(Error::config(format!(
                    "{}: subtree count {subtrees} requires {} register levels, got {}",
                    self.variant,
                    subtrees.trailing_zeros(),
                    self.reg_levels
                )));
            }
            if self.buffer_slots == 0 {
                return Err(Error::config("buffer slots must be >= 1"));
            }
            if policy == MappingPolicy::Direct && self.buffer_slots < self.chunk_size() {
                return Err(Error::config(format!(
                    "{}: direct mapping needs one slot per chunk index ({} slots < chunk size {})",
                    self.variant,
                    self.buffer_slots,
                    self.chunk_size()
                )));
            }
        }
        Ok(())
    }
}

pub fn derive_chunk_size(config: &EngineConfig) -> usize {
    config.variant.chunk_size()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_sizes() {
        assert_eq!(EngineConfig::new(Variant::Hrz, 4).unwrap().chunk_size(), 2);
        assert_eq!(
            EngineConfig::new(Variant::Dup { replicas: 8 }, 4).unwrap().chunk_size(),
            16
        );
        let hyb4 = Variant::Hyb {
            subtrees: 4,
            policy: MappingPolicy::Direct,
        };
        assert_eq!(EngineConfig::new(hyb4, 4).unwrap().chunk_size(), 8);
    }

    #[test]
    fn parse_names() {
        for name in ["hrz", "dup4", "dup8", "hyb4", "hyb4q", "hyb8", "hyb8q"] {
            let v: Variant = name.parse().unwrap();
            assert_eq!(v.to_string(), name);
        }
        assert_eq!(
            "HYB8Q".parse::<Variant>().unwrap(),
            Variant::Hyb {
                subtrees: 8,
                policy: MappingPolicy::Queue
            }
        );
    }

    #[test]
    fn parse_rejects() {
        for bad in ["hyb3", "hyb1", "dup1", "dup", "tree", "hyb", "hybq", "dup-2"] {
            assert!(bad.parse::<Variant>().is_err(), "{bad}");
        }
        let err = "hyb3".parse::<Variant>().unwrap_err().to_string();
        assert!(err.contains("power of two"), "{err}");
    }

    #[test]
    fn hybrid_register_levels() {
        let v: Variant = "hyb8q".parse().unwrap();
        let c = EngineConfig::new(v, 5).unwrap();
        assert_eq!(c.reg_levels, 3);
        assert_eq!(c.buffer_slots, 16);
        assert!(c.with_reg_levels(2).is_err());
        assert!(EngineConfig::new(v, 2).is_err());
    }

    #[test]
    fn direct_needs_chunk_sized_buffer() {
        let v: Variant = "hyb4".parse().unwrap();
        let c = EngineConfig::new(v, 5).unwrap();
        assert!(c.with_buffer_slots(4).is_err());
        let q: Variant = "hyb4q".parse().unwrap();
        let c = EngineConfig::new(q, 5).unwrap();
        assert!(c.with_buffer_slots(4).is_ok());
        assert!(c.with_buffer_slots(0).is_err());
    }

    #[test]
    fn horizontal_register_knob() {
        let c = EngineConfig::new(Variant::Hrz, 4).unwrap();
        assert_eq!(c.with_reg_levels(3).unwrap().reg_levels, 3);
        assert!(c.with_reg_levels(5).is_err());
    }
}
