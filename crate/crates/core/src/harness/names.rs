/// The 80 COCO object categories, multi-word names joined into one token so
/// each category is a single entity word.
pub const COCO_CATEGORIES: [&str; 80] = [
    "person", "bicycle", "car", "motorcycle", "airplane", "bus", "train", "truck", "boat", "trafficlight",
    "firehydrant", "stopsign", "parkingmeter", "bench", "bird", "cat", "dog", "horse", "sheep", "cow",
    "elephant", "bear", "zebra", "giraffe", "backpack", "umbrella", "handbag", "tie", "suitcase", "frisbee",
    "skis", "snowboard", "sportsball", "kite", "baseballbat", "baseballglove", "skateboard", "surfboard",
    "tennisracket", "bottle", "wineglass", "cup", "fork", "knife", "spoon", "bowl", "banana", "apple",
    "sandwich", "orange", "broccoli", "carrot", "hotdog", "pizza", "donut", "cake", "chair", "couch",
    "pottedplant", "bed", "diningtable", "toilet", "tv", "laptop", "mouse", "remote", "keyboard", "cellphone",
    "microwave", "oven", "toaster", "sink", "refrigerator", "book", "clock", "vase", "scissors", "teddybear",
    "hairdrier", "toothbrush",
];

/// Category names for a vocabulary of `n`: the COCO list first, then
/// `object081`, `object082`, ...
pub fn category_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| COCO_CATEGORIES.get(i).map_or_else(|| format!("object{:03}", i + 1), |s| s.to_string()))
        .collect()
}

/// Non-category nouns in the synthetic lexicon. The first three are
/// near-synonyms of "person".
pub const PERSON_SYNONYMS: [&str; 3] = ["people", "player", "catcher"];
pub const EXTRA_NOUNS: [&str; 6] = ["field", "uniform", "hat", "helmet", "baseball", "ball"];
