use std::fs;
use std::io::Cursor;

use proptest::prelude::*;

use vectn::dataset::{
    load_split, load_split_with, read_fourline, read_jsonl_examples, split_stats, DatasetFormat, Example, Label,
    LabelScheme, SplitStats,
};
use vectn::error::Error;
use vectn::pipeline::write_jsonl;

fn ex(id: &str, image: &str, caption: &str, target: &str, label: Label) -> Example {
    Example {
        id: id.into(),
        image_ref: image.into(),
        caption: caption.into(),
        target: target.into(),
        label,
    }
}

#[test]
fn stats_group_targets_by_post() {
    let examples = vec![
        ex("a", "1.jpg", "Obama and Biden speak", "Obama", Label::Positive),
        ex("b", "1.jpg", "Obama and Biden speak", "Biden", Label::Neutral),
        ex("c", "2.jpg", "Messi scores", "Messi", Label::Positive),
        ex("d", "3.jpg", "Adele cancels tour", "Adele", Label::Negative),
        ex("e", "4.jpg", "Jordan meets Bolt", "Jordan", Label::Negative),
        ex("f", "4.jpg", "Jordan meets Bolt", "Bolt", Label::Negative),
    ];
    assert_eq!(
        split_stats(&examples),
        SplitStats {
            positive_count: 2,
            negative_count: 3,
            neutral_count: 1,
            avg_targets_per_caption: 1.5,
        }
    );
    assert_eq!(split_stats(&examples).total(), 6);
    assert_eq!(split_stats(&[]).avg_targets_per_caption, 0.0);
}

#[test]
fn fourline_records_substitute_the_target() {
    let text = "RT @user : $T$ wins again\nSerena\n1\n17_06_1.jpg\n$T$ and Nadal lose\nFederer\n-1\n17_06_2.jpg\n";
    let got = read_fourline(Cursor::new(text), "inline", "train", LabelScheme::Polarity).unwrap();
    assert_eq!(got.len(), 2);
    assert_eq!(got[0].caption, "RT @user : Serena wins again");
    assert_eq!((got[0].id.as_str(), got[0].label), ("train-0", Label::Positive));
    assert_eq!((got[1].image_ref.as_str(), got[1].label), ("17_06_2.jpg", Label::Negative));

    let index = read_fourline(Cursor::new("$T$ here\nX\n2\ni.jpg\n"), "inline", "s", LabelScheme::Index).unwrap();
    assert_eq!(index[0].label, Label::Positive);
    let words = read_fourline(Cursor::new("$T$ here\nX\nneutral\ni.jpg\n\n"), "inline", "s", LabelScheme::Index).unwrap();
    assert_eq!(words[0].label, Label::Neutral);
}

#[test]
fn fourline_errors_name_the_record() {
    let truncated = read_fourline(Cursor::new("$T$ a\nX\n1\ni.jpg\n$T$ b\nY\n"), "f.txt", "s", LabelScheme::Index);
    assert!(matches!(truncated, Err(Error::Malformed { offset: 1, .. })));
    let no_placeholder = read_fourline(Cursor::new("plain\nX\n1\ni.jpg\n"), "f.txt", "s", LabelScheme::Index);
    assert!(matches!(no_placeholder, Err(Error::Malformed { offset: 0, .. })));
    let label = read_fourline(Cursor::new("$T$\nX\n7\ni.jpg\n"), "f.txt", "s", LabelScheme::Index);
    assert!(matches!(label, Err(Error::UnknownLabel(t)) if t == "7"));
    let polarity = read_fourline(Cursor::new("$T$\nX\n2\ni.jpg\n"), "f.txt", "s", LabelScheme::Polarity);
    assert!(matches!(polarity, Err(Error::UnknownLabel(_))));
}

#[test]
fn jsonl_validation() {
    let good = r#"{"id":"1","image":"a.jpg","caption":"Obama speaks","target":"Obama","label":"positive"}"#;
    assert_eq!(read_jsonl_examples(Cursor::new(good), "x").unwrap()[0].image_ref, "a.jpg");
    let dup = format!("{good}\n\n{good}\n");
    assert!(matches!(read_jsonl_examples(Cursor::new(dup), "x"), Err(Error::Malformed { offset: 2, .. })));
    let bad_label = good.replace("positive", "happy");
    assert!(matches!(read_jsonl_examples(Cursor::new(bad_label), "x"), Err(Error::UnknownLabel(l)) if l == "happy"));
    let empty_target = good.replace(r#""target":"Obama""#, r#""target":"  ""#);
    assert!(read_jsonl_examples(Cursor::new(empty_target), "x").is_err());
    assert!(read_jsonl_examples(Cursor::new("{not json"), "x").is_err());
}

#[test]
fn files_round_trip_and_missing_files_fail() {
    let dir = tempfile::tempdir().unwrap();
    let examples = vec![
        ex("a", "1.jpg", "Obama speaks", "Obama", Label::Positive),
        ex("b", "2.jpg", "Messi scores", "Messi", Label::Neutral),
    ];
    let path = dir.path().join("train.jsonl");
    write_jsonl(&path, &examples).unwrap();
    assert_eq!(load_split(&path, DatasetFormat::Jsonl).unwrap(), examples);

    let four = dir.path().join("dev.txt");
    fs::write(&four, "$T$ speaks\nObama\n0\n1.jpg\n").unwrap();
    let got = load_split_with(&four, DatasetFormat::Fourline, LabelScheme::Polarity).unwrap();
    assert_eq!(got[0].id, "dev-0");
    assert_eq!(got[0].label, Label::Neutral);

    assert!(matches!(
        load_split(&dir.path().join("missing.jsonl"), DatasetFormat::Jsonl),
        Err(Error::Io { .. })
    ));
    assert!("xml".parse::<DatasetFormat>().is_err());
    assert_eq!("fourline".parse::<DatasetFormat>().unwrap(), DatasetFormat::Fourline);
}

proptest! {
    #[test]
    fn labels_round_trip(i in 0usize..3) {
        let label = Label::from_index(i).unwrap();
        prop_assert_eq!(label.index(), i);
        prop_assert_eq!(label.as_str().parse::<Label>().unwrap(), label);
        prop_assert_eq!(LabelScheme::Polarity.parse(&(i as i64 - 1).to_string()).unwrap(), label);
    }

    #[test]
    fn stats_counts_sum_to_examples(labels in proptest::collection::vec(0usize..3, 0..40), posts in 1usize..6) {
        let examples: Vec<Example> = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| ex(&i.to_string(), &format!("{}.jpg", i % posts), "c", &format!("t{i}"), Label::ALL[l]))
            .collect();
        let s = split_stats(&examples);
        prop_assert_eq!(s.total(), labels.len());
        if !labels.is_empty() {
            let distinct = posts.min(labels.len());
            prop_assert!((s.avg_targets_per_caption - labels.len() as f64 / distinct as f64).abs() < 1e-12);
        }
    }
}
