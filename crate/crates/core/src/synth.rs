//! Seeded synthetic bridge questions for end-to-end checks with the proxy
//! scorers.
//!
//! Every question asks for an attribute of the creator of a work. The
//! first-hop sentence names the work and its creator, so it matches the
//! question lexically. The second-hop sentence states the attribute about
//! the creator: it carries the answer-type marker the IS proxy looks for
//! and shares no token with the question. Distractors cover both kinds of
//! signal: a review sentence about the same work, marker-bearing
//! sentences about unrelated people, and (in about half the questions) a
//! "trap" sentence that carries both a question word and a marker.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CandidateSentence, Dataset, FilterApplied, QuestionRecord, QuestionType, TextVariant};

const FIRST: &[&str] = &[
    "Henry", "Clara", "Osman", "Ines", "Tobias", "Marta", "Felix", "Agnes", "Dorian", "Lotte", "Emil",
    "Rosa", "Viktor", "Hanna", "Bruno", "Ilse", "Jonas", "Greta", "Caspar", "Nora", "Anton", "Selma",
    "Oskar", "Freya", "Mattias", "Edith", "Lucian", "Wilma", "Rupert", "Thea", "Konrad", "Mirela",
];

const LAST: &[&str] = &[
    "Miller", "Halvorsen", "Brandt", "Castell", "Okafor", "Lindqvist", "Moreau", "Petrakis", "Varga",
    "Szabo", "Novak", "Ferreira", "Nakamura", "Kowalczyk", "Albescu", "Dunmore", "Everly", "Garnett",
    "Hollis", "Jansen", "Kessler", "Lorimer", "Marchetti", "Nyberg", "Ostrova", "Prescott", "Quayle",
    "Ridley", "Sorensen", "Thorne", "Ulrich", "Whitcombe",
];

const WORK_ADJ: &[&str] = &[
    "Silent", "Crimson", "Hollow", "Amber", "Broken", "Gilded", "Distant", "Frozen", "Velvet", "Hidden",
    "Restless", "Pale", "Iron", "Wandering", "Scarlet", "Quiet", "Burning", "Forgotten", "Emerald",
    "Lonely", "Shattered", "Golden", "Sunken", "Endless",
];

const WORK_NOUN: &[&str] = &[
    "River", "Lantern", "Orchard", "Harbor", "Meadow", "Tower", "Compass", "Garden", "Mirror", "Bridge",
    "Forest", "Voyage", "Anchor", "Candle", "Cathedral", "Feather", "Glacier", "Horizon", "Island",
    "Kingdom", "Labyrinth", "Monsoon", "Obelisk", "Pendulum",
];

const PLACES: &[&str] = &[
    "Brookfield", "Ashcombe", "Derwen", "Falmoor", "Glenarry", "Harrowgate", "Kilbride", "Lowther",
    "Marlowe", "Northam", "Pellworth", "Ravensby", "Stonehaven", "Tarrant", "Wexcombe", "Yarrowdale",
];

const DEMONYMS: &[&str] = &[
    "French", "Danish", "Norwegian", "Swedish", "Italian", "Spanish", "Dutch", "Polish", "Greek",
    "Irish", "Scottish", "Austrian", "Belgian", "Canadian", "Mexican", "Brazilian",
];

const OCCUPATIONS: &[&str] = &[
    "painter", "sculptor", "rower", "chemist", "architect", "teacher", "lawyer", "farmer", "diplomat",
    "engineer", "surgeon", "astronomer",
];

const SUBJECTS: &[&str] = &[
    "pottery", "botany", "sailing", "chess", "falconry", "weaving", "geology", "fencing", "beekeeping",
    "cartography", "glassblowing", "archery", "calligraphy", "carpentry",
];

const REVIEW_ADJ: &[&str] = &["mixed", "warm", "glowing", "harsh", "lukewarm", "enthusiastic"];

const FILLERS: &[&str] = &[
    "{n} enjoyed long walks along the shore.",
    "{n} kept a small collection of rare stamps.",
    "{n} often spent summers with relatives abroad.",
    "{n} later described those days as happy ones.",
    "{n} corresponded with several friends for decades.",
];

/// (creator role, kind of work, verb phrase)
const ROLES: &[(&str, &str, &str)] = &[
    ("author", "novel", "written"),
    ("director", "film", "directed"),
    ("composer", "opera", "composed"),
    ("illustrator", "comic", "drawn"),
    ("founder", "magazine", "founded"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ask {
    Nationality,
    DeathYear,
    BirthCity,
    Children,
}

const ASKS: [Ask; 4] = [Ask::Nationality, Ask::DeathYear, Ask::BirthCity, Ask::Children];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub questions: usize,
    pub seed: u64,
    /// Probability that a question gets a trap sentence.
    pub trap_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            questions: 200,
            seed: 17,
            trap_rate: 0.5,
        }
    }
}

/// Draws distinct values from fixed pools for one question.
struct Draw<'r> {
    rng: &'r mut ChaCha8Rng,
    used: BTreeSet<String>,
}

impl Draw<'_> {
    fn pick(&mut self, pool: &[&str]) -> String {
        loop {
            let v = pool.choose(self.rng).expect("non-empty pool").to_string();
            if self.used.insert(v.clone()) {
                return v;
            }
        }
    }

    fn person(&mut self) -> String {
        format!("{} {}", self.pick(FIRST), self.pick(LAST))
    }

    fn number(&mut self, lo: u32, hi: u32) -> String {
        loop {
            let v = self.rng.random_range(lo..=hi).to_string();
            if self.used.insert(v.clone()) {
                return v;
            }
        }
    }
}

struct Doc {
    title: String,
    sentences: Vec<String>,
    gold: Option<usize>,
}

impl Doc {
    fn new(title: &str, sentences: Vec<String>, gold: Option<usize>) -> Self {
        Doc {
            title: title.to_string(),
            sentences,
            gold,
        }
    }
}

fn article(word: &str) -> &'static str {
    if word.starts_with(['A', 'E', 'I', 'O', 'U', 'a', 'e', 'i', 'o', 'u']) {
        "an"
    } else {
        "a"
    }
}

fn filler(d: &mut Draw<'_>, name: &str) -> String {
    FILLERS.choose(d.rng).expect("fillers").replace("{n}", name)
}

fn question(idx: usize, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> QuestionRecord {
    let ask = ASKS[idx % ASKS.len()];
    let mut d = Draw { rng, used: BTreeSet::new() };
    let (role, genre, verb) = *ROLES.choose(d.rng).expect("roles");
    let work = format!("The {} {}", d.pick(WORK_ADJ), d.pick(WORK_NOUN));
    let person = d.person();
    let spouse = d.person();

    let (q, answer, hop2, trap, marker) = match ask {
        Ask::Nationality => {
            let dem = d.pick(DEMONYMS);
            let occ = d.pick(OCCUPATIONS);
            let tp = d.person();
            let tw = format!("The {} {}", d.pick(WORK_ADJ), d.pick(WORK_NOUN));
            let tdem = d.pick(DEMONYMS);
            (
                format!("What nationality was the {role} of {work}?"),
                dem.clone(),
                format!("{person} was {} {dem} {occ}.", article(&dem)),
                (tp.clone(), format!("{tp}, {} {tdem} {role}, reviewed {tw}.", article(&tdem))),
                Ask::Nationality,
            )
        }
        Ask::DeathYear => {
            let year = d.number(1850, 1990);
            let tp = d.person();
            let tyear = d.number(1850, 1990);
            (
                format!("When did the {role} of {work} die?"),
                year.clone(),
                format!("{person} passed away in {year}."),
                (tp.clone(), format!("{tp}, {} {role}, retired to the coast in {tyear}.", article(role))),
                Ask::DeathYear,
            )
        }
        Ask::BirthCity => {
            let place = d.pick(PLACES);
            let tp = d.person();
            let tplace = d.pick(PLACES);
            (
                format!("In which city was the {role} of {work} born?"),
                place.clone(),
                format!("{person} grew up in the town of {place}."),
                (tp.clone(), format!("{tp}, {} {role}, settled in the village of {tplace} near the coast.", article(role))),
                Ask::BirthCity,
            )
        }
        Ask::Children => {
            let n = d.number(2, 9);
            let tp = d.person();
            let tn = d.number(2, 9);
            (
                format!("How many children did the {role} of {work} have?"),
                n.clone(),
                format!("{person} had {n} sons."),
                (tp.clone(), format!("{tp}, {} {role}, won {tn} awards over a long career.", article(role))),
                Ask::Children,
            )
        }
    };

    let mut docs = Vec::new();

    let review = format!("{work} received {} reviews from critics.", d.pick(REVIEW_ADJ));
    let hop1 = format!("{work} is a {genre} {verb} by {person}.");
    let mut wdoc = vec![hop1.clone(), review];
    if d.rng.random_bool(0.5) {
        wdoc.swap(0, 1);
    }
    let g1 = wdoc.iter().position(|s| *s == hop1);
    docs.push(Doc::new(&work, wdoc, g1));

    docs.push(Doc::new(
        &person,
        vec![hop2, format!("{person} married {spouse} after the war.")],
        Some(0),
    ));

    if d.rng.random_bool(cfg.trap_rate) {
        let (tp, sentence) = trap;
        let f = filler(&mut d, &tp);
        docs.push(Doc::new(&tp, vec![sentence, f], None));
    }

    for _ in 0..2 {
        let x = d.person();
        let (s1, s2) = (d.pick(SUBJECTS), d.pick(SUBJECTS));
        let sentence = match marker {
            Ask::Nationality => {
                let (dem, occ, s3) = (d.pick(DEMONYMS), d.pick(OCCUPATIONS), d.pick(SUBJECTS));
                format!("{x} was {} {dem} {occ} known for {s1}, {s2} and {s3}.", article(&dem))
            }
            Ask::DeathYear => format!("{x} opened a {s1} and {s2} school in {}.", d.number(1850, 1990)),
            Ask::BirthCity => format!("{x} moved to the province of {} to study {s1} and {s2} abroad.", d.pick(PLACES)),
            Ask::Children => format!(
                "{x} owned {} {s1} farms and {} {s2} mills near the border.",
                d.number(2, 9),
                d.number(2, 9)
            ),
        };
        let f = filler(&mut d, &x);
        docs.push(Doc::new(&x, vec![sentence, f], None));
    }

    if d.rng.random_bool(0.5) {
        let (y, z) = (d.person(), d.person());
        let f = filler(&mut d, &y);
        docs.push(Doc::new(&y, vec![format!("{y} is {} {role} and a friend of {z}.", article(role)), f], None));
    }

    for _ in 0..2 {
        let x = d.person();
        let (a, b) = (filler(&mut d, &x), filler(&mut d, &x));
        let sentences = if a == b { vec![a] } else { vec![a, b] };
        docs.push(Doc::new(&x, sentences, None));
    }

    docs.shuffle(d.rng);

    let qid = format!("synth-{idx:04}");
    let mut candidates = Vec::new();
    let mut gold_facts = BTreeSet::new();
    for doc in &docs {
        for (i, s) in doc.sentences.iter().enumerate() {
            candidates.push(CandidateSentence::new(&qid, &doc.title, i, s));
        }
        if let Some(g) = doc.gold {
            gold_facts.insert((doc.title.clone(), g));
        }
    }
    QuestionRecord {
        question_id: qid,
        question_text: q,
        question_type: QuestionType::Bridge,
        candidates,
        gold_facts,
        answer: Some(answer),
    }
}

/// Generates `cfg.questions` bridge questions; identical for identical
/// configs.
pub fn generate(cfg: &SynthConfig) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let questions = (0..cfg.questions).map(|i| question(i, cfg, &mut rng)).collect();
    Dataset {
        questions,
        source_path: format!("synthetic:seed={}:n={}", cfg.seed, cfg.questions),
        filter_applied: FilterApplied::BridgeOnly,
        text_variant: TextVariant::Raw,
        rejections: Vec::new(),
        blank_sentences_dropped: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_valid() {
        let cfg = SynthConfig { questions: 20, ..Default::default() };
        let a = generate(&cfg);
        let b = generate(&cfg);
        assert_eq!(a.questions, b.questions);
        for q in &a.questions {
            q.validate().unwrap();
            assert_eq!(q.gold_facts.len(), 2);
            assert!(q.candidates.len() >= 10);
        }
        let other = generate(&SynthConfig { seed: 18, ..cfg });
        assert_ne!(a.questions, other.questions);
    }
}
