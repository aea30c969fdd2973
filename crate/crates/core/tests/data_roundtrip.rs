use mmprobe::data::{load_confounders, load_dataset, save_confounders, save_dataset, GrayImage, Label, LabeledDataset, Meme};
use mmprobe::harness::{confounder_domain, synthetic_confounders};
use proptest::prelude::*;

fn meme_strategy() -> impl Strategy<Value = Meme> {
    (
        "[a-zA-Z][a-zA-Z ,.!?'\"é]{0,30}",
        1usize..6,
        1usize..6,
        any::<u64>(),
        proptest::option::of("[a-z ]{1,20}"),
        proptest::option::of(proptest::collection::vec("[A-Z][a-z]{1,8}", 0..3)),
        any::<bool>(),
    )
        .prop_map(|(text, w, h, seed, caption, celebrities, hateful)| {
            let pixels = (0..w * h).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 7) as u8).collect();
            Meme {
                id: String::new(),
                text,
                image: GrayImage::new(w, h, pixels).unwrap(),
                caption,
                celebrities,
                label: if hateful { Label::Hateful } else { Label::NonHateful },
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn datasets_survive_save_and_load(mut memes in proptest::collection::vec(meme_strategy(), 1..8)) {
        for (i, m) in memes.iter_mut().enumerate() {
            m.id = format!("s{i}");
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.jsonl");
        let d = LabeledDataset::new("rt", memes).unwrap();
        save_dataset(&d, &path).unwrap();
        prop_assert_eq!(load_dataset(&path).unwrap(), d);
    }
}

#[test]
fn confounder_groups_survive_save_and_load() {
    let groups = synthetic_confounders(&confounder_domain(2), 15, 0.4, 8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("groups.jsonl");
    save_confounders(&groups, &path).unwrap();
    assert_eq!(load_confounders(&path).unwrap(), groups);
}
