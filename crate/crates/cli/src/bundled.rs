//! Configs shipped inside the binary, runnable with `demo <name>`.

pub const CONFIGS: [(&str, &str); 11] = [
    ("isometry", include_str!("../configs/isometry.cfg")),
    ("covariance", include_str!("../configs/covariance.cfg")),
    ("mecke", include_str!("../configs/mecke.cfg")),
    ("theorem31", include_str!("../configs/theorem31.cfg")),
    ("equivalence", include_str!("../configs/equivalence.cfg")),
    ("theta_integral", include_str!("../configs/theta_integral.cfg")),
    ("interpolation", include_str!("../configs/interpolation.cfg")),
    ("fubini", include_str!("../configs/fubini.cfg")),
    ("orlicz", include_str!("../configs/orlicz.cfg")),
    ("identities", include_str!("../configs/identities.cfg")),
    ("surrogate", include_str!("../configs/surrogate.cfg")),
];

pub fn get(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".cfg").unwrap_or(name);
    CONFIGS.iter().find(|(n, _)| *n == name).map(|(_, c)| *c)
}

pub fn names() -> impl Iterator<Item = &'static str> {
    CONFIGS.iter().map(|(n, _)| *n)
}

#[cfg(test)]
mod tests {
    #[test]
    fn every_bundled_config_validates() {
        for (name, src) in super::CONFIGS {
            if let Err(d) = crate::load(src) {
                panic!("{name}: {d:?}");
            }
        }
    }
}
