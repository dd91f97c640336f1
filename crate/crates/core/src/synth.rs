//! Synthetic corpora and gold sets with controlled citation noise.
//!
//! Positive gold items are renderings of corpus records with dropped title
//! words, abbreviated given names and off-by-one years. Negative items cite
//! fabricated records that never enter the corpus.

use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AuthorName, BibRecord, Corpus, RecordId};
use crate::eval::GoldItem;
use crate::matcher::MatchInput;

pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Perturbations {
    pub token_drop_p: f64,
    pub author_initial_p: f64,
    pub year_jitter_p: f64,
}

impl Perturbations {
    pub const NONE: Perturbations = Perturbations { token_drop_p: 0.0, author_initial_p: 0.0, year_jitter_p: 0.0 };
    pub const MODERATE: Perturbations = Perturbations { token_drop_p: 0.1, author_initial_p: 0.5, year_jitter_p: 0.05 };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub records: usize,
    pub gold: usize,
    pub negative_fraction: f64,
    pub perturbations: Perturbations,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            records: 1000,
            gold: 200,
            negative_fraction: 0.2,
            perturbations: Perturbations::MODERATE,
            seed: DEFAULT_SEED,
        }
    }
}

impl SynthConfig {
    pub fn negatives(&self) -> usize {
        (self.gold as f64 * self.negative_fraction).round() as usize
    }

    pub fn positives(&self) -> usize {
        self.gold - self.negatives()
    }

    fn check(&self) -> Result<(), SynthError> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(SynthError::BadConfig(format!("{name} must lie in [0, 1], got {p}")))
            }
        };
        prob("negative_fraction", self.negative_fraction)?;
        prob("token_drop_p", self.perturbations.token_drop_p)?;
        prob("author_initial_p", self.perturbations.author_initial_p)?;
        prob("year_jitter_p", self.perturbations.year_jitter_p)?;
        if self.records < self.positives() {
            return Err(SynthError::BadConfig(format!(
                "{} records cannot back {} positive gold items",
                self.records,
                self.positives()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("bad synth config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub corpus: Corpus,
    pub gold: Vec<GoldItem>,
}

const OPENERS: &[&str] = &["", "", "", "On", "Remarks on", "A note on", "Notes on"];

const ADJECTIVES: &[&str] = &[
    "abelian", "affine", "algebraic", "analytic", "asymptotic", "bounded", "canonical", "cohomological",
    "combinatorial", "compact", "conformal", "convex", "cyclic", "differential", "discrete", "elliptic",
    "ergodic", "exceptional", "finite", "fractional", "generalized", "geometric", "harmonic", "hyperbolic",
    "hypergeometric", "integral", "invariant", "isoperimetric", "local", "minimal", "modular", "nilpotent",
    "nonlinear", "orthogonal", "parabolic", "periodic", "projective", "quadratic", "random", "rational",
    "reductive", "regular", "singular", "smooth", "spectral", "stochastic", "symplectic", "tropical",
    "uniform", "unitary",
];

const NOUNS: &[&str] = &[
    "algebras", "automorphisms", "bundles", "categories", "characters", "cohomology", "curves", "designs",
    "determinants", "dynamics", "eigenvalues", "embeddings", "equations", "estimates", "extensions", "fibrations",
    "fields", "flows", "forms", "functions", "functors", "graphs", "groups", "ideals", "inequalities",
    "integrals", "invariants", "lattices", "manifolds", "martingales", "matrices", "measures", "metrics",
    "modules", "moduli", "operators", "partitions", "permutations", "polynomials", "polytopes", "processes",
    "quotients", "representations", "resolvents", "rings", "schemes", "semigroups", "series", "sheaves",
    "singularities", "solitons", "spaces", "spectra", "surfaces", "symmetries", "tensors", "tilings",
    "topologies", "varieties", "wavelets",
];

const CONNECTORS: &[&str] = &["of", "for", "on", "in", "with", "and"];

const TAILS: &[&str] = &[
    "", "", "", "", "and applications", "in higher dimensions", "with boundary", "over number fields",
    "in positive characteristic", "of small rank", "at infinity", "revisited",
];

const SURNAMES: &[&str] = &[
    "Abel", "Ahlfors", "Artin", "Atiyah", "Banach", "Bernays", "Birkhoff", "Bochner", "Borel", "Brauer",
    "Cantor", "Cartan", "Chebyshev", "Chern", "Courant", "Dedekind", "Deligne", "Dirichlet", "Eilenberg",
    "Erdős", "Faltings", "Fejér", "Fredholm", "Frobenius", "Galois", "Gelfand", "Gödel", "Grothendieck",
    "Hadamard", "Hardy", "Hausdorff", "Hecke", "Hilbert", "Hironaka", "Hörmander", "Hurwitz", "Iwasawa",
    "Jacobi", "Kähler", "Kolmogorov", "Kronecker", "Kummer", "Landau", "Langlands", "Lebesgue", "Lefschetz",
    "Littlewood", "Łojasiewicz", "Lyapunov", "Markov", "Milnor", "Minkowski", "Mordell", "Morse", "Nash",
    "Neumann", "Noether", "Ostrowski", "Perron", "Poincaré", "Pólya", "Ramanujan", "Riesz", "Ritt",
    "Schwartz", "Selberg", "Serre", "Siegel", "Sobolev", "Steinitz", "Szegő", "Tate", "Teichmüller",
    "Thom", "Toeplitz", "Turán", "Ulam", "Veblen", "Weil", "Weyl", "Whitney", "Witt", "Zariski", "Zygmund",
];

const GIVEN: &[&str] = &[
    "Anna", "Boris", "Carla", "David", "Elena", "Felix", "Greta", "Hans", "Irene", "Jakob", "Karin", "Lars",
    "Maria", "Niels", "Olga", "Pavel", "Rosa", "Stefan", "Tamara", "Ulrich", "Vera", "Walter", "Yuri", "Zofia",
    "Emil", "Ida", "Oskar", "Helga", "Igor", "Marta",
];

const SERIALS: &[&str] = &[
    "J. Funct. Anal.", "Invent. Math.", "Ann. Math.", "Math. Ann.", "Compos. Math.", "Duke Math. J.",
    "J. Algebra", "Adv. Math.", "Trans. Am. Math. Soc.", "Proc. Lond. Math. Soc.", "Math. Z.",
    "J. Reine Angew. Math.", "Commun. Math. Phys.", "Isr. J. Math.", "Acta Arith.", "Topology",
    "J. Comb. Theory, Ser. A", "Probab. Theory Relat. Fields", "Numer. Math.", "Ark. Mat.",
];

const MSC_TOP: &[&str] = &[
    "05", "11", "14", "16", "20", "22", "26", "30", "32", "33", "34", "35", "37", "41", "42", "46", "47",
    "49", "53", "55", "57", "58", "60", "62", "65", "68", "81", "90",
];

fn sentence_case(words: &[&str]) -> String {
    let mut s = words.join(" ");
    if let Some(first) = s.chars().next() {
        let upper: String = first.to_uppercase().collect();
        s.replace_range(..first.len_utf8(), &upper);
    }
    s
}

fn title_words(rng: &mut ChaCha8Rng) -> Vec<&'static str> {
    let mut w: Vec<&str> = Vec::new();
    let opener = *OPENERS.choose(rng).unwrap();
    w.extend(opener.split_whitespace());
    if !w.is_empty() {
        w.push("the");
    }
    w.push(ADJECTIVES.choose(rng).unwrap());
    w.push(NOUNS.choose(rng).unwrap());
    w.push(CONNECTORS.choose(rng).unwrap());
    if rng.random_bool(0.6) {
        w.push(ADJECTIVES.choose(rng).unwrap());
    }
    w.push(NOUNS.choose(rng).unwrap());
    w.extend(TAILS.choose(rng).unwrap().split_whitespace());
    w
}

fn fabricate(rng: &mut ChaCha8Rng, id: RecordId) -> BibRecord {
    let title = sentence_case(&title_words(rng));
    let n_authors = *[1, 1, 2, 2, 3].choose(rng).unwrap();
    let surnames: Vec<&str> = SURNAMES.choose_multiple(rng, n_authors).copied().collect();
    let authors = surnames.iter().map(|s| AuthorName::new(*s, Some(GIVEN.choose(rng).unwrap()))).collect();
    let start = rng.random_range(1..400u32);
    let len = rng.random_range(4..40u32);
    let top = MSC_TOP.choose(rng).unwrap();
    let letter = (b'A' + rng.random_range(0..26u8)) as char;
    let mut msc = vec![format!("{top}{letter}{:02}", rng.random_range(5..100u32))];
    if rng.random_bool(0.4) {
        let other = MSC_TOP.choose(rng).unwrap();
        msc.push(format!("{other}{letter}{:02}", rng.random_range(5..100u32)));
        msc.dedup();
    }
    BibRecord {
        id,
        title,
        authors,
        year: Some(rng.random_range(1950..=2023)),
        serial: Some(SERIALS.choose(rng).unwrap().to_string()),
        volume: Some(rng.random_range(1..=250u32).to_string()),
        pages: Some(format!("{start}-{}", start + len)),
        doi: None,
        msc,
        abstract_redacted: rng.random_bool(0.1),
    }
}

fn join_authors(names: &[String]) -> String {
    match names {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

fn forward_name(a: &AuthorName) -> String {
    match &a.given {
        Some(g) => format!("{g} {}", a.surname),
        None => a.surname.clone(),
    }
}

/// `"<authors>, <title>, <serial> <vol> (<year>), <pages>."`, authors in
/// forward order with full given names.
pub fn render_citation(record: &BibRecord) -> String {
    let names: Vec<String> = record.authors.iter().map(forward_name).collect();
    render(record, &join_authors(&names), &record.title, record.year)
}

fn render(record: &BibRecord, authors: &str, title: &str, year: Option<i32>) -> String {
    let mut s = String::new();
    if !authors.is_empty() {
        s.push_str(authors);
        s.push_str(", ");
    }
    s.push_str(title);
    if let Some(serial) = &record.serial {
        s.push_str(", ");
        s.push_str(serial);
        if let Some(v) = &record.volume {
            s.push(' ');
            s.push_str(v);
        }
    }
    if let Some(y) = year {
        s.push_str(&format!(" ({y})"));
    }
    if let Some(p) = &record.pages {
        s.push_str(", ");
        s.push_str(p);
    }
    s.push('.');
    s
}

/// Noisy rendering; with all probabilities 0 this equals `render_citation`.
pub fn perturbed_citation(record: &BibRecord, p: &Perturbations, rng: &mut ChaCha8Rng) -> String {
    let names: Vec<String> = record
        .authors
        .iter()
        .map(|a| match &a.given {
            Some(g) if rng.random_bool(p.author_initial_p) => {
                format!("{}. {}", g.chars().next().unwrap(), a.surname)
            }
            _ => forward_name(a),
        })
        .collect();
    let words: Vec<&str> = record.title.split_whitespace().collect();
    let mut kept: Vec<&str> = words.iter().copied().filter(|_| !rng.random_bool(p.token_drop_p)).collect();
    if kept.is_empty() {
        kept.push(words[0]);
    }
    let title = if kept.len() == words.len() { record.title.clone() } else { sentence_case(&kept) };
    let year = record.year.map(|y| {
        if rng.random_bool(p.year_jitter_p) {
            if rng.random_bool(0.5) { y + 1 } else { y - 1 }
        } else {
            y
        }
    });
    render(record, &join_authors(&names), &title, year)
}

pub fn synth(config: &SynthConfig) -> Result<SynthOutput, SynthError> {
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut corpus = Corpus::new();
    for id in 1..=config.records as RecordId {
        corpus.add_record(fabricate(&mut rng, id)).expect("generated records are valid and unique");
    }

    let mut gold = Vec::with_capacity(config.gold);
    for i in index::sample(&mut rng, config.records, config.positives()).into_vec() {
        let record = corpus.get_record(i as RecordId + 1).expect("sampled id exists");
        let text = perturbed_citation(record, &config.perturbations, &mut rng);
        gold.push(GoldItem { input: MatchInput::Citation(text), expected_id: Some(record.id) });
    }
    let mut next_id = config.records as RecordId;
    for _ in 0..config.negatives() {
        next_id += 1;
        let fake = fabricate(&mut rng, next_id);
        let text = perturbed_citation(&fake, &config.perturbations, &mut rng);
        gold.push(GoldItem { input: MatchInput::Citation(text), expected_id: None });
    }
    gold.shuffle(&mut rng);
    Ok(SynthOutput { corpus, gold })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::gold_to_jsonl;

    #[test]
    fn deterministic_under_seed() {
        let cfg = SynthConfig::default();
        let a = synth(&cfg).unwrap();
        let b = synth(&cfg).unwrap();
        assert_eq!(a.corpus.to_jsonl(), b.corpus.to_jsonl());
        assert_eq!(gold_to_jsonl(&a.gold), gold_to_jsonl(&b.gold));
        let c = synth(&SynthConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.corpus.to_jsonl(), c.corpus.to_jsonl());
    }

    #[test]
    fn class_sizes_and_validity() {
        let out = synth(&SynthConfig::default()).unwrap();
        assert_eq!(out.corpus.len(), 1000);
        assert_eq!(out.gold.len(), 200);
        assert_eq!(out.gold.iter().filter(|g| g.expected_id.is_none()).count(), 40);
        assert!(out.corpus.records().all(|r| r.validate().is_ok()));
        let mut expected: Vec<_> = out.gold.iter().filter_map(|g| g.expected_id).collect();
        expected.sort();
        expected.dedup();
        assert_eq!(expected.len(), 160);
    }

    #[test]
    fn zero_noise_is_verbatim() {
        let cfg = SynthConfig { perturbations: Perturbations::NONE, ..SynthConfig::default() };
        let out = synth(&cfg).unwrap();
        for g in out.gold.iter().filter(|g| g.expected_id.is_some()) {
            let r = out.corpus.get_record(g.expected_id.unwrap()).unwrap();
            assert_eq!(g.input, MatchInput::Citation(render_citation(r)));
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let small = SynthConfig { records: 10, gold: 100, negative_fraction: 0.5, ..SynthConfig::default() };
        assert!(matches!(synth(&small), Err(SynthError::BadConfig(_))));
        let bad_p = SynthConfig {
            perturbations: Perturbations { token_drop_p: 1.5, ..Perturbations::NONE },
            ..SynthConfig::default()
        };
        assert!(synth(&bad_p).is_err());
        let all_neg = SynthConfig { records: 0, gold: 10, negative_fraction: 1.0, ..SynthConfig::default() };
        assert_eq!(synth(&all_neg).unwrap().gold.len(), 10);
    }

    #[test]
    fn citation_shape() {
        let r = BibRecord {
            id: 5,
            title: "Spectral estimates".into(),
            authors: vec![AuthorName::new("Weyl", Some("Hans")), AuthorName::new("Riesz", Some("Rosa"))],
            year: Some(1990),
            serial: Some("Math. Z.".into()),
            volume: Some("12".into()),
            pages: Some("1-20".into()),
            doi: None,
            msc: vec!["35P15".into()],
            abstract_redacted: false,
        };
        assert_eq!(render_citation(&r), "Hans Weyl and Rosa Riesz, Spectral estimates, Math. Z. 12 (1990), 1-20.");
    }
}
