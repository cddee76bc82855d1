//! Reference 18-class bottle confusion matrices (25 test queries each) for
//! three feature extractors.
//!
//! Class order: babyblue01, babyblue02, beige01, black bottle,
//! black cup, black tumbler, blue, lavender01, red01, red02, silver, white,
//! white01, white02, white03, white cup, yellow02, yellow03.

use super::{ConfusionMatrix, EvalError};

/// Pre-trained VGG16 features.
pub const VGG16_CSV: &str = include_str!("../../fixtures/vgg16.csv");
/// Pre-trained AlexNet features.
pub const ALEXNET_CSV: &str = include_str!("../../fixtures/alexnet.csv");
/// Nine-plane AlexNet features.
pub const ALPHA_ALEXNET_CSV: &str = include_str!("../../fixtures/alpha_alexnet.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixture {
    Vgg16,
    AlexNet,
    AlphaAlexNet,
}

impl Fixture {
    pub const ALL: [Fixture; 3] = [Fixture::Vgg16, Fixture::AlexNet, Fixture::AlphaAlexNet];

    pub fn csv(self) -> &'static str {
        match self {
            Fixture::Vgg16 => VGG16_CSV,
            Fixture::AlexNet => ALEXNET_CSV,
            Fixture::AlphaAlexNet => ALPHA_ALEXNET_CSV,
        }
    }

    pub fn matrix(self) -> Result<ConfusionMatrix, EvalError> {
        ConfusionMatrix::from_csv(self.csv())
    }

    /// Expected accuracy as an exact fraction.
    pub fn expected_accuracy(self) -> (u64, u64) {
        match self {
            Fixture::Vgg16 | Fixture::AlphaAlexNet => (22, 25),
            Fixture::AlexNet => (21, 25),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Fixture::Vgg16 => "vgg16",
            Fixture::AlexNet => "alexnet",
            Fixture::AlphaAlexNet => "alpha_alexnet",
        }
    }

    /// Accepts the names returned by [`Fixture::name`], case-insensitively.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.to_ascii_lowercase();
        Fixture::ALL.into_iter().find(|f| f.name() == s)
    }
}
