//! Named experiment presets, one per regime plus a formulation cross-check.

use toml::Table;

use crate::error::{Error, Result};
use crate::harness::config::parse_table;

pub const NAMES: [&str; 4] = ["blowup-demo", "global-demo", "decr-demo", "crossval"];

const BLOWUP_DEMO: &str = r#"
[coefficient]
spec = "shift(1,-2)"
theta = 0.5
alpha = 2.0

[problem]
mass = 1.0

[initial]
kind = "pam"
q = "auto"
delta = "auto"

[grid]
n = 400

[run]
formulation = "f"
t_max = 50.0

[output]
every_steps = 4
"#;

const GLOBAL_DEMO: &str = r#"
[coefficient]
spec = "shift(1,-1)"

[problem]
mass = 1.0

[initial]
kind = "cosine"
amplitude = 0.5

[grid]
n = 400

[run]
formulation = "f"
t_max = 5.0
output_interval = 0.05
"#;

const DECR_DEMO: &str = r#"
[coefficient]
spec = "singular(1,2.5,1)"
theta = 0.5
alpha = 1.5

[problem]
mass = 8.0

[initial]
kind = "pam"
q = "auto"
delta = "auto"

[grid]
n = 400

[run]
formulation = "f"
t_max = 50.0

[output]
every_steps = 4
"#;

const CROSSVAL: &str = r#"
[coefficient]
spec = "shift(1,-1)"

[problem]
mass = 1.0

[initial]
kind = "cosine"
amplitude = 0.5

[grid]
n = 400

[run]
formulation = "both"
t_max = 0.1
dt_init = 1e-5
dt_max = 1e-5
output_interval = 0.025
"#;

/// The preset as an editable table.
pub fn preset(name: &str) -> Result<Table> {
    let text = match name {
        "blowup-demo" => BLOWUP_DEMO,
        "global-demo" => GLOBAL_DEMO,
        "decr-demo" => DECR_DEMO,
        "crossval" => CROSSVAL,
        _ => {
            return Err(Error::config(
                "preset",
                format!("unknown preset `{name}` (known: {})", NAMES.join(", ")),
            ))
        }
    };
    parse_table(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::from_table;

    #[test]
    fn presets_validate() {
        for name in NAMES {
            from_table(preset(name).unwrap(), None).unwrap();
        }
        assert!(preset("nope").is_err());
    }
}
