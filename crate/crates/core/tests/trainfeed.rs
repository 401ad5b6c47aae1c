use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use segpipe_core::segdata::{GeneratorMeta, Manifest, ManifestHeader, ManifestWriter, Provenance, SampleRecord};
use segpipe_core::trainfeed::{
    augment_stream, build_linkage, emit_finetune, emit_pretrain, write_id_list, FeedError, FeedPlan, Linkage,
    ReplacementSource,
};

fn reals(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("r{i}")).collect()
}

fn syn(id: String, src: &str, p: Provenance) -> SampleRecord {
    SampleRecord {
        sample_id: id,
        provenance: p,
        source_id: src.into(),
        image_ref: "images/a.png".into(),
        mask_ref: "masks/a.png".into(),
        caption: "c".into(),
        segments_info: None,
        generator_meta: Some(GeneratorMeta {
            backend: "mock".into(),
            version: "1".into(),
            seed: 0,
            text2mask_steps: None,
            mask2img_steps: 40,
            conditioning_ref: None,
            regenerated: false,
            degenerate: false,
        }),
    }
}

fn full_linkage(real: &[String], per: usize) -> Linkage {
    real.iter().map(|r| (r.clone(), (0..per).map(|i| format!("{r}#s{i}")).collect())).collect()
}

fn plan(p: f64, seed: u64, n_real: usize, per: usize) -> FeedPlan {
    let r = reals(n_real);
    let link = full_linkage(&r, per);
    FeedPlan::new(p, seed, r, link, ReplacementSource::PerSample).unwrap()
}

#[test]
fn zero_p_emits_real_permutations_per_epoch() {
    let p = plan(0.0, 9, 17, 3);
    let draws: Vec<_> = augment_stream(&p, 17 * 5).collect();
    assert!(draws.iter().all(|d| !d.synthetic && d.sample_id == d.real_id));
    let all: BTreeSet<String> = reals(17).into_iter().collect();
    for epoch in draws.chunks(17) {
        let ids: BTreeSet<String> = epoch.iter().map(|d| d.sample_id.clone()).collect();
        assert_eq!(ids, all);
    }
    let first: Vec<_> = draws[..17].iter().map(|d| &d.sample_id).collect();
    let second: Vec<_> = draws[17..34].iter().map(|d| &d.sample_id).collect();
    assert_ne!(first, second, "epochs reuse the same order");
}

#[test]
fn one_p_with_full_linkage_is_all_synthetic() {
    let p = plan(1.0, 1, 10, 2);
    let mut stream = augment_stream(&p, 1000);
    assert!(stream.by_ref().all(|d| d.synthetic && d.sample_id.starts_with(&format!("{}#", d.real_id))));
    assert_eq!(stream.shortfall(), 0);
}

#[test]
fn replacement_count_within_4_sigma_over_seeds() {
    let (n, prob) = (5000u64, 0.3);
    let sigma = (n as f64 * prob * (1.0 - prob)).sqrt();
    for seed in 0..20 {
        let p = plan(prob, seed, 50, 2);
        let count = augment_stream(&p, n).filter(|d| d.synthetic).count() as f64;
        assert!((count - n as f64 * prob).abs() <= 4.0 * sigma, "seed {seed}: {count}");
    }
}

#[test]
fn chosen_synthetic_is_uniform() {
    let k = 5;
    let p = plan(1.0, 77, 1, k);
    let n = 50_000u64;
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for d in augment_stream(&p, n) {
        *counts.entry(d.sample_id).or_default() += 1;
    }
    assert_eq!(counts.len(), k);
    let expected = n as f64 / k as f64;
    let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let df = (k - 1) as f64;
    // chi-squared with df degrees of freedom: mean df, variance 2 df.
    assert!(chi2 <= df + 4.0 * (2.0 * df).sqrt(), "chi2 = {chi2}");
}

#[test]
fn empty_linkage_keeps_real_and_counts_shortfall() {
    let r = reals(4);
    let link: Linkage = [("r0".to_string(), vec!["r0#a".to_string()])].into_iter().collect();
    let p = FeedPlan::new(1.0, 0, r, link, ReplacementSource::PerSample).unwrap();
    let mut stream = augment_stream(&p, 400);
    let draws: Vec<_> = stream.by_ref().collect();
    assert_eq!(stream.shortfall(), 300);
    assert_eq!(draws.iter().filter(|d| d.synthetic).count(), 100);
    assert!(draws.iter().filter(|d| d.shortfall).all(|d| d.sample_id == d.real_id));
}

#[test]
fn global_pool_draws_from_every_linked_synthetic() {
    let r = reals(4);
    let link: Linkage = [("r0".to_string(), vec!["r0#a".to_string(), "r0#b".to_string()])].into_iter().collect();
    let p = FeedPlan::new(1.0, 0, r, link, ReplacementSource::GlobalPool).unwrap();
    let mut stream = augment_stream(&p, 400);
    let draws: Vec<_> = stream.by_ref().collect();
    assert!(draws.iter().all(|d| d.synthetic));
    assert_eq!(stream.shortfall(), 0);
    assert!(draws.iter().any(|d| d.real_id != "r0"));
}

#[test]
fn invalid_plans_are_rejected() {
    for bad in [-0.1, 1.5, f64::NAN] {
        assert!(matches!(FeedPlan::new(bad, 0, reals(2), Linkage::default(), ReplacementSource::PerSample), Err(FeedError::InvalidPlan(_))));
    }
    assert!(FeedPlan::new(0.5, 0, vec![], Linkage::default(), ReplacementSource::PerSample).is_err());
    let stray: Linkage = [("zz".to_string(), vec!["zz#0".to_string()])].into_iter().collect();
    assert!(FeedPlan::new(0.5, 0, reals(2), stray, ReplacementSource::PerSample).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn stream_is_a_pure_function_and_randomly_accessible(seed in any::<u64>(), p in 0.0f64..=1.0, n_real in 1usize..20, iters in 0u64..200) {
        let a = plan(p, seed, n_real, 3);
        let b = plan(p, seed, n_real, 3);
        let xs: Vec<_> = augment_stream(&a, iters).collect();
        prop_assert_eq!(&xs, &augment_stream(&b, iters).collect::<Vec<_>>());
        for d in &xs {
            prop_assert_eq!(d, &a.draw_at(d.iteration));
        }
    }

    #[test]
    fn linkage_groups_by_source(counts in prop::collection::vec(0usize..6, 1..8), cap in prop::option::of(0usize..4), seed in any::<u64>()) {
        let r = reals(counts.len());
        let mut recs = Vec::new();
        for (i, &c) in counts.iter().enumerate() {
            for j in 0..c {
                recs.push(syn(format!("r{i}#{j}"), &r[i], if j % 2 == 0 { Provenance::MaskSyn } else { Provenance::ImgSyn }));
            }
        }
        let link = build_linkage(r.iter().map(String::as_str), recs.clone(), cap, seed).unwrap();
        for (i, &c) in counts.iter().enumerate() {
            let got = link.get(&r[i]);
            let want = cap.map_or(c, |k| c.min(k));
            prop_assert_eq!(got.len(), want);
            let prefix = format!("r{}#", i);
            prop_assert!(got.iter().all(|s| s.starts_with(&prefix)));
            let unique: BTreeSet<_> = got.iter().collect();
            prop_assert_eq!(unique.len(), got.len());
        }
        prop_assert_eq!(link, build_linkage(r.iter().map(String::as_str), recs, cap, seed).unwrap());
    }
}

#[test]
fn linkage_cap_examples() {
    let r = reals(3);
    let recs: Vec<_> = r.iter().flat_map(|x| (0..50).map(move |j| syn(format!("{x}#{j}"), x, Provenance::ImgSyn))).collect();
    assert!(build_linkage(r.iter().map(String::as_str), recs.clone(), Some(0), 1).unwrap().is_empty());
    let capped = build_linkage(r.iter().map(String::as_str), recs.clone(), Some(10), 1).unwrap();
    assert!(r.iter().all(|x| capped.get(x).len() == 10));
    assert_eq!(capped, build_linkage(r.iter().map(String::as_str), recs.clone(), Some(10), 1).unwrap());
    assert_ne!(capped, build_linkage(r.iter().map(String::as_str), recs, Some(10), 2).unwrap());
}

#[test]
fn dangling_source_is_an_error() {
    let recs = vec![syn("x#0".into(), "ghost", Provenance::MaskSyn)];
    assert!(matches!(build_linkage(["r0"], recs, None, 0), Err(FeedError::DanglingSource { .. })));
}

#[test]
fn id_list_has_one_line_per_iteration() {
    let p = plan(0.6, 3, 10, 2);
    let mut buf = Vec::new();
    let shortfall = write_id_list(augment_stream(&p, 123), &mut buf).unwrap();
    assert_eq!(shortfall, 0);
    let text = String::from_utf8(buf).unwrap();
    let ids: Vec<&str> = text.lines().collect();
    assert_eq!(ids.len(), 123);
    let expected: Vec<String> = augment_stream(&p, 123).map(|d| d.sample_id).collect();
    assert_eq!(ids, expected);
}

#[test]
fn pretrain_and_finetune_are_provenance_pure() {
    let dir = tempfile::tempdir().unwrap();
    let mixed = dir.path().join("mixed.jsonl");
    let mut w = ManifestWriter::create(&mixed, ManifestHeader::new("mix", 5)).unwrap();
    for i in 0..4 {
        w.append(SampleRecord::real(format!("r{i}"), "i.png", "m.png")).unwrap();
        for j in 0..i {
            let p = if j % 2 == 0 { Provenance::MaskSyn } else { Provenance::ImgSyn };
            w.append(syn(format!("r{i}#{j}"), &format!("r{i}"), p)).unwrap();
        }
    }
    drop(w);
    let m = Manifest::open(&mixed).unwrap();
    let all = m.records().unwrap();

    let pre = dir.path().join("pre.jsonl");
    let n = emit_pretrain(std::slice::from_ref(&m), &pre, ManifestHeader::new("pre", 5)).unwrap();
    let pre_recs = Manifest::open(&pre).unwrap().records().unwrap();
    assert_eq!(n as usize, all.iter().filter(|r| r.provenance != Provenance::Real).count());
    assert!(pre_recs.iter().all(|r| r.provenance.is_synthetic()));

    let fine = dir.path().join("fine.jsonl");
    let n = emit_finetune(&m, &fine, ManifestHeader::new("fine", 5)).unwrap();
    assert_eq!(n, 4);
    assert!(Manifest::open(&fine).unwrap().records().unwrap().iter().all(|r| r.provenance == Provenance::Real));

    let empty = dir.path().join("empty.jsonl");
    assert_eq!(emit_pretrain(&[], &empty, ManifestHeader::new("e", 5)).unwrap(), 0);
    assert!(emit_pretrain(std::slice::from_ref(&m), &dir.path().join("x.jsonl"), ManifestHeader::new("x", 6)).is_err());
}
