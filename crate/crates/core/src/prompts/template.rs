//! Prompt templates with `{name}` placeholders.
//!
//! Rendering is a single left-to-right pass that only substitutes names the
//! caller supplies, so any other brace text (for instance `{{s}}` in the
//! vote prompt) is emitted unchanged and substituted values are never
//! re-scanned.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("template `{name}` is missing placeholder {{{placeholder}}}")]
    MissingPlaceholder { name: String, placeholder: String },
}

/// Substitutes each `{key}` whose key appears in `vars`.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let key = &after[..close];
            vars.iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

macro_rules! template_set {
    ($($field:ident => [$($ph:literal),*]),* $(,)?) => {
        /// Every prompt fragment used by the strategies.
        #[derive(Debug, Clone, PartialEq, Eq)]
        pub struct TemplateSet {
            $(pub $field: String,)*
        }

        impl TemplateSet {
            /// The templates compiled into the binary.
            pub fn builtin() -> Self {
                TemplateSet {
                    $($field: strip_newline(include_str!(concat!(
                        "../../templates/", stringify!($field), ".txt"
                    ))),)*
                }
            }

            /// Builtin set with any `<name>.txt` found in `dir` taking
            /// precedence.
            pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
                let mut set = Self::builtin();
                $(
                    let path = dir.join(concat!(stringify!($field), ".txt"));
                    if path.exists() {
                        set.$field = strip_newline(&std::fs::read_to_string(&path).map_err(
                            |source| TemplateError::Io { path: path.display().to_string(), source },
                        )?);
                    }
                )*
                set.check()?;
                Ok(set)
            }

            /// Every template must still contain the placeholders the
            /// strategies fill in.
            pub fn check(&self) -> Result<(), TemplateError> {
                $($(
                    if !self.$field.contains(concat!("{", $ph, "}")) {
                        return Err(TemplateError::MissingPlaceholder {
                            name: stringify!($field).into(),
                            placeholder: $ph.into(),
                        });
                    }
                )*)*
                Ok(())
            }
        }
    };
}

template_set! {
    cot_preamble => [],
    dwm_preamble => [],
    dwm_interleave => [],
    final_query => ["question", "choices"],
    tot_propose => ["story", "question", "choices"],
    tot_vote => ["story", "observations"],
    tot_answer => ["story", "question", "choices", "observations"],
    struct_represent => ["story", "format"],
    struct_answer => ["story", "format", "representation", "question", "choices"],
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

fn strip_newline(s: &str) -> String {
    s.strip_suffix('\n').unwrap_or(s).to_string()
}
