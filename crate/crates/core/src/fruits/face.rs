use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::FaceId;

macro_rules! attribute_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "kebab-case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!(
                        concat!("unknown ", stringify!($name), " `{}`"),
                        other
                    )),
                }
            }
        }
    };
}

attribute_enum!(Gender { Male => "male", Female => "female" });
attribute_enum!(Race {
    Caucasian => "caucasian",
    EastAsian => "east-asian",
    African => "african",
    Others => "others",
});
attribute_enum!(Scenario { Controlled => "controlled", Wild => "wild" });

/// Annotated attributes of a test face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attributes {
    pub age: u32,
    pub gender: Gender,
    pub race: Race,
    pub scenario: Scenario,
}

/// A face of the verification test set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestFace {
    pub face_id: FaceId,
    pub identity_id: String,
    pub attributes: Attributes,
}

impl TestFace {
    pub fn new(face_id: impl Into<FaceId>, identity_id: impl Into<String>, attributes: Attributes) -> Self {
        TestFace {
            face_id: face_id.into(),
            identity_id: identity_id.into(),
            attributes,
        }
    }
}
