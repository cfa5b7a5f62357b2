mod common;

use common::oracle::{ncc_search, random_extraction_case};
use dfcaptcha_core::extraction::{extract_response, ExtractionConfig};
use dfcaptcha_core::rng::SeedStream;
use dfcaptcha_core::types::{ActivityTemplate, ChallengeCategory, FeatureStream, Frame, Modality};
use dfcaptcha_core::ChallengeSpec;
use proptest::prelude::*;

fn challenge(template: Vec<Frame>) -> ChallengeSpec {
    ChallengeSpec::new(
        "probe",
        "probe",
        ChallengeCategory::Technology,
        Modality::Video,
        0.2,
        0.2,
        1.0,
        ActivityTemplate::new(template).unwrap(),
    )
    .unwrap()
}

#[test]
fn matches_exhaustive_search_on_random_streams() {
    let root = SeedStream::root(2024).derive("extraction-oracle");
    for i in 0..1000 {
        let (stream, template) = random_extraction_case(&root.index(i));
        let want = ncc_search(&stream, &template);
        let c = challenge(template);
        let got = extract_response(&FeatureStream::new(stream, 25.0).unwrap(), &c, &ExtractionConfig::default())
            .unwrap();
        assert_eq!(
            (got.segment.source_offset, got.match_score.to_bits()),
            (want.0, want.1.to_bits()),
            "case {i}: got {:?}, oracle {want:?}",
            (got.segment.source_offset, got.match_score)
        );
    }
}

fn embedded(template: &[Frame], noise: &[Frame], at: usize) -> Vec<Frame> {
    let mut s = noise.to_vec();
    for (k, f) in template.iter().enumerate() {
        for (v, t) in s[at + k].iter_mut().zip(f) {
            *v += t;
        }
    }
    s
}

fn frames(len: usize, dim: usize, scale: f64) -> impl Strategy<Value = Vec<Frame>> {
    prop::collection::vec(prop::collection::vec(-scale..scale, dim), len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adding_a_constant_changes_nothing(
        template in frames(12, 3, 2.0),
        noise in frames(60, 3, 0.05),
        at in 0usize..=48,
        shift in -50.0f64..50.0,
    ) {
        let c = challenge(template.clone());
        let s = embedded(&template, &noise, at);
        let moved: Vec<Frame> = s.iter().map(|f| f.iter().map(|v| v + shift).collect()).collect();
        let cfg = ExtractionConfig::default();
        let a = extract_response(&FeatureStream::new(s, 25.0).unwrap(), &c, &cfg).unwrap();
        let b = extract_response(&FeatureStream::new(moved, 25.0).unwrap(), &c, &cfg).unwrap();
        prop_assert_eq!(a.segment.source_offset, b.segment.source_offset);
        prop_assert!((a.match_score - b.match_score).abs() < 1e-9);
    }

    #[test]
    fn shifting_the_content_shifts_the_offset(
        template in frames(10, 2, 2.0),
        pad in 0usize..40,
        k in 0usize..30,
    ) {
        let c = challenge(template.clone());
        let stream_at = |at: usize| {
            let quiet = vec![vec![0.0; 2]; pad + 10 + 30];
            FeatureStream::new(embedded(&template, &quiet, at), 25.0).unwrap()
        };
        let cfg = ExtractionConfig::default();
        let base = extract_response(&stream_at(pad / 2), &c, &cfg).unwrap().segment.source_offset;
        let moved = extract_response(&stream_at(pad / 2 + k), &c, &cfg).unwrap().segment.source_offset;
        prop_assert_eq!(moved, base + k);
    }
}
