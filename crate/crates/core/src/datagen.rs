//! Seeded synthetic marketplace generator.
//!
//! Builds a latent world of categories, product senses, and brands, then
//! renders items, query sessions with graded feedback, and sentence pairs
//! with ground-truth similarity. The generator is a pure function of
//! (spec, seed): every emitted byte is reproducible.
//!
//! Semantic structure that downstream experiments rely on:
//!
//! - every sense carries title surfaces (used in item titles and most
//!   queries) and a disjoint paraphrase vocabulary used only by paraphrase
//!   queries, which therefore hit zero lexical matches;
//! - ambiguous surfaces are shared by two senses, with a dominant sense
//!   that attracts most purchase intent;
//! - accessory items reference a core sense's surface but earn weaker
//!   feedback for core-intent queries.

use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};
use crate::eval::{EvalQuery, FeedbackGrade, GradedCandidate, StsPair};
use crate::retrieval::ItemDoc;
use crate::rng::{derive_seed, Rng};
use crate::training::TrainingPair;

const PRODUCTS_PER_CATEGORY: usize = 16;
/// Items that list without a brand word concentrate their title mass on
/// the sense surface.
const BRANDLESS_PROB: f64 = 0.35;
const MODIFIER_COUNT: usize = 48;
const ACCESSORY_TYPE_COUNT: usize = 8;
/// Eval candidate pools hold roughly this many items so that cutoffs up to
/// 100 stay discriminative.
const POOL_BASE: usize = 380;
/// Last sixth of sessions (by timestamp) becomes the eval slice.
const EVAL_DENOMINATOR: usize = 6;
/// Probability that a session converts into a purchase.
const PURCHASE_PROB: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WorldSpec {
    pub seed: u64,
    pub n_brands: usize,
    pub n_categories: usize,
    pub n_items: usize,
    /// Size of the query template pool sessions draw from.
    pub n_queries: usize,
    /// Fraction of senses that share a surface term with another sense.
    pub ambiguity_rate: f64,
    /// Fraction of items that are accessories referencing a core sense.
    pub accessory_rate: f64,
    /// Typo/paraphrase perturbation pressure on rendered queries.
    pub noise_rate: f64,
    /// Render words as katakana codepoints to exercise the CJK bigram
    /// tokenizer path.
    #[serde(default)]
    pub cjk: bool,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            seed: 42,
            n_brands: 40,
            n_categories: 24,
            n_items: 10_000,
            n_queries: 4_000,
            ambiguity_rate: 0.3,
            accessory_rate: 0.2,
            noise_rate: 0.35,
            cjk: false,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_brands == 0 || self.n_categories == 0 || self.n_items == 0 || self.n_queries == 0
        {
            return Err(Error::Config("world counts must be positive".into()));
        }
        for (name, rate) in [
            ("ambiguity_rate", self.ambiguity_rate),
            ("accessory_rate", self.accessory_rate),
            ("noise_rate", self.noise_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("{name} {rate} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct Sense {
    pub id: usize,
    pub category_id: usize,
    /// Words item titles are rendered from: the primary name plus any
    /// ambiguous surfaces shared with other senses.
    pub title_surfaces: Vec<String>,
    /// Words queries may use: the title surfaces plus a synonym that never
    /// appears in titles (vocabulary mismatch pressure).
    pub query_surfaces: Vec<String>,
    /// Query-only words; never emitted into any title.
    pub paraphrases: Vec<String>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct WorldItem {
    pub item_id: String,
    pub title: String,
    pub sense_id: usize,
    pub brand_id: usize,
    pub is_accessory: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    Surface,
    SurfaceBrand,
    Long,
    Paraphrase,
    Typo,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct QueryTemplate {
    pub text: String,
    pub sense_id: usize,
    pub mode: QueryMode,
    /// Brand constraint carried by brand-bearing query modes.
    pub brand_id: Option<usize>,
}

/// One simulated search session.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SessionLog {
    pub session_id: String,
    pub query: String,
    /// (item_id, grade, timestamp); at most one purchase per session.
    pub events: Vec<(String, FeedbackGrade, u64)>,
}

#[derive(Debug, Clone)]
pub struct World {
    spec: WorldSpec,
    pub categories: Vec<String>,
    pub brands: Vec<String>,
    /// Query-only alternate spellings, one per brand; never in titles.
    pub brand_aliases: Vec<String>,
    pub senses: Vec<Sense>,
    pub items: Vec<WorldItem>,
    pub templates: Vec<QueryTemplate>,
    /// Shared surface -> sense ids, dominant first.
    pub ambiguous_surfaces: BTreeMap<String, Vec<usize>>,
    core_by_sense: Vec<Vec<usize>>,
    accessories_by_sense: Vec<Vec<usize>>,
    by_category: Vec<Vec<usize>>,
}

impl World {
    pub fn spec(&self) -> &WorldSpec {
        &self.spec
    }

    pub fn items_jsonl(&self) -> String {
        let mut out = String::new();
        for item in &self.items {
            let doc = ItemDoc {
                item_id: item.item_id.clone(),
                title: item.title.clone(),
            };
            out.push_str(&serde_json::to_string(&doc).expect("item serializes"));
            out.push('\n');
        }
        out
    }

    /// Latent structure for oracle-based checks, keyed deterministically.
    pub fn truth_json(&self) -> Result<String> {
        #[derive(serde::Serialize)]
        struct ItemTruth<'a> {
            sense_id: usize,
            category_id: usize,
            brand: &'a str,
            is_accessory: bool,
        }
        #[derive(serde::Serialize)]
        struct Truth<'a> {
            categories: &'a [String],
            brands: &'a [String],
            brand_aliases: &'a [String],
            senses: &'a [Sense],
            ambiguous_surfaces: &'a BTreeMap<String, Vec<usize>>,
            items: BTreeMap<&'a str, ItemTruth<'a>>,
        }
        let items: BTreeMap<&str, ItemTruth> = self
            .items
            .iter()
            .map(|item| {
                (
                    item.item_id.as_str(),
                    ItemTruth {
                        sense_id: item.sense_id,
                        category_id: self.senses[item.sense_id].category_id,
                        brand: self.brands[item.brand_id].as_str(),
                        is_accessory: item.is_accessory,
                    },
                )
            })
            .collect();
        let truth = Truth {
            categories: &self.categories,
            brands: &self.brands,
            brand_aliases: &self.brand_aliases,
            senses: &self.senses,
            ambiguous_surfaces: &self.ambiguous_surfaces,
            items,
        };
        Ok(serde_json::to_string_pretty(&truth)?)
    }
}

/// Pronounceable lowercase word, globally unique within the world.
fn fresh_word(rng: &mut Rng, used: &mut HashSet<String>, syllables: std::ops::RangeInclusive<usize>) -> String {
    const CONSONANTS: [&str; 18] = [
        "b", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch",
        "sh",
    ];
    const VOWELS: [&str; 8] = ["a", "e", "i", "o", "u", "ai", "ei", "oo"];
    loop {
        let count = *syllables.start() + rng.index(syllables.end() - syllables.start() + 1);
        let mut word = String::new();
        for _ in 0..count {
            word.push_str(rng.pick(&CONSONANTS));
            word.push_str(rng.pick(&VOWELS));
        }
        if used.insert(word.clone()) {
            return word;
        }
    }
}

/// Map ASCII letters onto katakana codepoints (CJK rendering mode).
fn to_cjk(text: &str) -> String {
    text.chars()
        .map(|c| {
            if c.is_ascii_lowercase() {
                char::from_u32(0x30A2 + (c as u32 - 'a' as u32)).unwrap()
            } else {
                c
            }
        })
        .collect()
}

fn render(spec: &WorldSpec, words: &[&str]) -> String {
    let joined = words.join(" ");
    if spec.cjk {
        to_cjk(&joined)
    } else {
        joined
    }
}

/// Swap or drop one character somewhere past the first position.
fn apply_typo(rng: &mut Rng, word: &str) -> String {
    let chars: Vec<char> = word.chars().collect();
    if chars.len() < 3 {
        return word.to_string();
    }
    let pos = 1 + rng.index(chars.len() - 2);
    let mut out = chars.clone();
    if rng.chance(0.5) {
        out.swap(pos, pos + 1);
    } else {
        out.remove(pos);
    }
    out.into_iter().collect()
}

pub fn generate_world(spec: &WorldSpec) -> Result<World> {
    spec.validate()?;
    let mut rng = Rng::seed_from(derive_seed(spec.seed, "world"));
    let mut used = HashSet::new();

    let categories: Vec<String> = (0..spec.n_categories)
        .map(|_| fresh_word(&mut rng, &mut used, 2..=3))
        .collect();
    let brands: Vec<String> = (0..spec.n_brands)
        .map(|_| fresh_word(&mut rng, &mut used, 2..=3))
        .collect();
    let brand_aliases: Vec<String> = (0..spec.n_brands)
        .map(|_| fresh_word(&mut rng, &mut used, 2..=3))
        .collect();
    let modifiers: Vec<String> = (0..MODIFIER_COUNT)
        .map(|_| fresh_word(&mut rng, &mut used, 1..=2))
        .collect();
    let accessory_types: Vec<String> = (0..ACCESSORY_TYPE_COUNT)
        .map(|_| fresh_word(&mut rng, &mut used, 2..=2))
        .collect();

    let mut senses = Vec::new();
    for category_id in 0..spec.n_categories {
        for _ in 0..PRODUCTS_PER_CATEGORY {
            let primary = fresh_word(&mut rng, &mut used, 2..=3);
            let title_synonym = fresh_word(&mut rng, &mut used, 2..=3);
            let query_synonym = fresh_word(&mut rng, &mut used, 2..=3);
            let paraphrases = vec![
                fresh_word(&mut rng, &mut used, 2..=3),
                fresh_word(&mut rng, &mut used, 2..=3),
            ];
            senses.push(Sense {
                id: senses.len(),
                category_id,
                title_surfaces: vec![primary.clone(), title_synonym.clone()],
                query_surfaces: vec![primary, title_synonym, query_synonym],
                paraphrases,
            });
        }
    }

    // Ambiguity: pairs of cross-category senses sharing one surface word.
    let mut ambiguous_surfaces: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let shared_count = ((spec.ambiguity_rate * senses.len() as f64) / 2.0).round() as usize;
    let mut already_shared: HashSet<usize> = HashSet::new();
    for _ in 0..shared_count {
        let mut tries = 0;
        loop {
            tries += 1;
            if tries > 100 {
                break;
            }
            let a = rng.index(senses.len());
            let b = rng.index(senses.len());
            if a == b
                || senses[a].category_id == senses[b].category_id
                || already_shared.contains(&a)
                || already_shared.contains(&b)
            {
                continue;
            }
            let shared = fresh_word(&mut rng, &mut used, 2..=2);
            senses[a].title_surfaces.push(shared.clone());
            senses[a].query_surfaces.push(shared.clone());
            senses[b].title_surfaces.push(shared.clone());
            senses[b].query_surfaces.push(shared.clone());
            // Dominant sense listed first.
            ambiguous_surfaces.insert(shared, vec![a, b]);
            already_shared.insert(a);
            already_shared.insert(b);
            break;
        }
    }

    // Items.
    let mut items = Vec::with_capacity(spec.n_items);
    let mut core_by_sense = vec![Vec::new(); senses.len()];
    let mut accessories_by_sense = vec![Vec::new(); senses.len()];
    let mut by_category = vec![Vec::new(); spec.n_categories];
    for i in 0..spec.n_items {
        let sense_id = rng.index(senses.len());
        let brand_id = rng.index(brands.len());
        let is_accessory = rng.chance(spec.accessory_rate);
        let sense = &senses[sense_id];
        let surface = rng.pick(&sense.title_surfaces).clone();
        let brand = brands[brand_id].as_str();
        let branded = !rng.chance(BRANDLESS_PROB);
        let title = if is_accessory {
            let acc = rng.pick(&accessory_types).as_str();
            render(spec, &[brand, acc, "for", &surface])
        } else {
            let mut words = Vec::new();
            if branded {
                words.push(brand);
            }
            words.push(surface.as_str());
            for _ in 0..rng.index(3) {
                words.push(rng.pick(&modifiers).as_str());
            }
            render(spec, &words)
        };
        let item_id = format!("item_{i:06}");
        if is_accessory {
            accessories_by_sense[sense_id].push(i);
        } else {
            core_by_sense[sense_id].push(i);
        }
        by_category[sense.category_id].push(i);
        items.push(WorldItem {
            item_id,
            title,
            sense_id,
            brand_id,
            is_accessory,
        });
    }

    // Query templates.
    let paraphrase_weight = if spec.noise_rate > 0.3 { 0.25 } else { 0.15 };
    let typo_weight = 0.10 * spec.noise_rate.min(1.0);
    let weights = [0.40, 0.15, 0.20, paraphrase_weight, typo_weight];
    let mut templates = Vec::with_capacity(spec.n_queries);
    for _ in 0..spec.n_queries {
        let sense_id = rng.index(senses.len());
        let mode = match rng.weighted_index(&weights) {
            0 => QueryMode::Surface,
            1 => QueryMode::SurfaceBrand,
            2 => QueryMode::Long,
            3 => QueryMode::Paraphrase,
            _ => QueryMode::Typo,
        };
        let sense = &senses[sense_id];
        let surface = rng.pick(&sense.query_surfaces).clone();
        let mut brand_id = None;
        let pick_brand_word = |rng: &mut Rng| -> (usize, String) {
            let b = rng.index(brands.len());
            let word = if rng.chance(0.5) {
                brand_aliases[b].clone()
            } else {
                brands[b].clone()
            };
            (b, word)
        };
        let text = match mode {
            QueryMode::Surface => {
                if rng.chance(0.3) {
                    render(spec, &[&surface, rng.pick(&modifiers)])
                } else {
                    render(spec, &[&surface])
                }
            }
            QueryMode::SurfaceBrand => {
                let (b, word) = pick_brand_word(&mut rng);
                brand_id = Some(b);
                render(spec, &[&word, &surface])
            }
            QueryMode::Long => {
                let (b, word) = pick_brand_word(&mut rng);
                brand_id = Some(b);
                let m1 = rng.pick(&modifiers).clone();
                let m2 = rng.pick(&modifiers).clone();
                render(spec, &[&word, &surface, &m1, &m2])
            }
            QueryMode::Paraphrase => {
                let words: Vec<&str> = sense.paraphrases.iter().map(String::as_str).collect();
                render(spec, &words)
            }
            QueryMode::Typo => {
                let noisy = apply_typo(&mut rng, &surface);
                render(spec, &[&noisy])
            }
        };
        // A shared surface pulls intent toward its dominant sense.
        let mut intent = sense_id;
        if !matches!(mode, QueryMode::Paraphrase) {
            if let Some(owners) = ambiguous_surfaces.get(&surface) {
                intent = if rng.chance(0.8) { owners[0] } else { owners[1] };
            }
        }
        templates.push(QueryTemplate {
            text,
            sense_id: intent,
            mode,
            brand_id,
        });
    }

    Ok(World {
        spec: spec.clone(),
        categories,
        brands,
        brand_aliases,
        senses,
        items,
        templates,
        ambiguous_surfaces,
        core_by_sense,
        accessories_by_sense,
        by_category,
    })
}

/// Output of session simulation: training pairs from the earlier time
/// slice, eval queries from the later one, and the raw session logs.
#[derive(Debug, Clone)]
pub struct SessionOutput {
    pub pairs: Vec<TrainingPair>,
    pub eval_queries: Vec<EvalQuery>,
    pub sessions: Vec<SessionLog>,
}

impl SessionOutput {
    pub fn pairs_jsonl(&self) -> String {
        let mut out = String::new();
        for pair in &self.pairs {
            out.push_str(&serde_json::to_string(pair).expect("pair serializes"));
            out.push('\n');
        }
        out
    }

    pub fn eval_jsonl(&self) -> String {
        let mut out = String::new();
        for q in &self.eval_queries {
            out.push_str(&serde_json::to_string(q).expect("query serializes"));
            out.push('\n');
        }
        out
    }
}

/// Candidate tiers in decreasing true relevance.
#[derive(Clone, Copy, PartialEq)]
enum Tier {
    OnSense,
    Accessory,
    AmbiguousDistractor,
    SameCategory,
    Random,
}

pub fn generate_sessions(world: &World, n_sessions: usize) -> Result<SessionOutput> {
    if n_sessions == 0 {
        return Err(Error::Config("n_sessions must be positive".into()));
    }
    let spec = world.spec();
    let mut rng = Rng::seed_from(derive_seed(spec.seed, "sessions"));
    let eval_count = n_sessions / EVAL_DENOMINATOR;
    let eval_start = n_sessions - eval_count;

    let mut pairs = Vec::new();
    let mut eval_queries = Vec::new();
    let mut sessions = Vec::new();

    for s in 0..n_sessions {
        let template = rng.pick(&world.templates);
        let is_eval = s >= eval_start;
        // Deterministic paraphrase injection keeps the eval slice supplied
        // with zero-lexical-hit queries whenever noise pressure is high.
        let force_paraphrase =
            is_eval && spec.noise_rate > 0.3 && (s - eval_start) % 10 == 0;
        let (query_text, intent) = if force_paraphrase {
            let sense = &world.senses[template.sense_id];
            let words: Vec<&str> = sense.paraphrases.iter().map(String::as_str).collect();
            (render(spec, &words), template.sense_id)
        } else {
            (template.text.clone(), template.sense_id)
        };

        // Assemble the candidate pool, most relevant tiers first.
        let pool_target = (POOL_BASE + rng.index(41)).min(world.items.len());
        let mut pool: Vec<(usize, Tier)> = Vec::with_capacity(pool_target);
        let mut seen: HashSet<usize> = HashSet::new();
        let add_from = |rng: &mut Rng,
                            pool: &mut Vec<(usize, Tier)>,
                            seen: &mut HashSet<usize>,
                            source: &[usize],
                            want: usize,
                            tier: Tier| {
            if source.is_empty() {
                return;
            }
            let mut tries = 0;
            let mut added = 0;
            while added < want && tries < want * 4 {
                tries += 1;
                let idx = source[rng.index(source.len())];
                if seen.insert(idx) {
                    pool.push((idx, tier));
                    added += 1;
                }
            }
        };

        // Brand-bearing queries get a slice of on-sense items of that brand
        // so purchases can express the brand constraint.
        if let Some(brand) = template.brand_id {
            let on_brand: Vec<usize> = world.core_by_sense[intent]
                .iter()
                .copied()
                .filter(|&idx| world.items[idx].brand_id == brand)
                .collect();
            add_from(&mut rng, &mut pool, &mut seen, &on_brand, 5, Tier::OnSense);
        }
        let on_sense_want = 10 + rng.index(7);
        add_from(
            &mut rng,
            &mut pool,
            &mut seen,
            &world.core_by_sense[intent],
            on_sense_want,
            Tier::OnSense,
        );
        add_from(
            &mut rng,
            &mut pool,
            &mut seen,
            &world.accessories_by_sense[intent],
            6,
            Tier::Accessory,
        );
        // Other senses sharing a surface with the intent sense.
        for owners in world.ambiguous_surfaces.values() {
            if owners.contains(&intent) {
                for &other in owners.iter().filter(|&&o| o != intent) {
                    add_from(
                        &mut rng,
                        &mut pool,
                        &mut seen,
                        &world.core_by_sense[other],
                        16,
                        Tier::AmbiguousDistractor,
                    );
                }
            }
        }
        // A heavy same-category slice keeps the ranking task fine-grained:
        // separating the intent sense from its neighbors requires more than
        // coarse cluster structure.
        add_from(
            &mut rng,
            &mut pool,
            &mut seen,
            &world.by_category[world.senses[intent].category_id],
            200,
            Tier::SameCategory,
        );
        {
            let mut tries = 0;
            while pool.len() < pool_target && tries < pool_target * 4 {
                tries += 1;
                let idx = rng.index(world.items.len());
                if seen.insert(idx) {
                    pool.push((idx, Tier::Random));
                }
            }
        }

        // One purchase at most, always on an on-sense core item; a query
        // that names a brand buys that brand when the pool offers it.
        let purchase_slot: Option<usize> = if rng.chance(PURCHASE_PROB) {
            let wanted_brand = if force_paraphrase { None } else { template.brand_id };
            let slot_pool = |brand: Option<usize>| -> Vec<usize> {
                pool.iter()
                    .enumerate()
                    .filter(|(_, (idx, tier))| {
                        *tier == Tier::OnSense
                            && brand.is_none_or(|b| world.items[*idx].brand_id == b)
                    })
                    .map(|(slot, _)| slot)
                    .collect()
            };
            let mut slots = slot_pool(wanted_brand);
            if slots.is_empty() {
                slots = slot_pool(None);
            }
            if slots.is_empty() {
                None
            } else {
                Some(slots[rng.index(slots.len())])
            }
        } else {
            None
        };

        let mut candidates = Vec::with_capacity(pool.len());
        let mut events = Vec::new();
        for (slot, &(item_idx, tier)) in pool.iter().enumerate() {
            let grade = if Some(slot) == purchase_slot {
                FeedbackGrade::Purchase
            } else {
                let brand_match = template.brand_id.is_some()
                    && !force_paraphrase
                    && template.brand_id == Some(world.items[item_idx].brand_id);
                let (p_like, p_comment, p_click) = match tier {
                    Tier::OnSense if brand_match => (0.18, 0.22, 0.40),
                    Tier::OnSense => (0.08, 0.13, 0.33),
                    Tier::Accessory => (0.02, 0.03, 0.10),
                    Tier::AmbiguousDistractor => (0.0, 0.01, 0.06),
                    Tier::SameCategory => (0.0, 0.005, 0.01),
                    Tier::Random => (0.0, 0.0, 0.004),
                };
                let roll = rng.next_f64();
                if roll < p_like {
                    FeedbackGrade::Like
                } else if roll < p_like + p_comment {
                    FeedbackGrade::Comment
                } else if roll < p_like + p_comment + p_click {
                    FeedbackGrade::Click
                } else {
                    FeedbackGrade::View
                }
            };
            let item = &world.items[item_idx];
            if grade > FeedbackGrade::View {
                events.push((
                    item.item_id.clone(),
                    grade,
                    s as u64 * 1000 + events.len() as u64,
                ));
            }
            candidates.push(GradedCandidate {
                item_id: item.item_id.clone(),
                grade,
            });
        }

        let session_id = format!("s{s:06}");
        if is_eval {
            eval_queries.push(EvalQuery::new(&session_id, &query_text, candidates)?);
        } else if let Some(slot) = purchase_slot {
            let item = &world.items[pool[slot].0];
            pairs.push(TrainingPair::new(&query_text, &item.title)?);
        }
        sessions.push(SessionLog {
            session_id,
            query: query_text,
            events,
        });
    }

    Ok(SessionOutput {
        pairs,
        eval_queries,
        sessions,
    })
}

/// Ground-truth similarity on a 0-5 scale from shared latent structure.
fn gold_similarity(world: &World, a: usize, b: usize) -> f64 {
    let (ia, ib) = (&world.items[a], &world.items[b]);
    if ia.title == ib.title {
        return 5.0;
    }
    let (sa, sb) = (&world.senses[ia.sense_id], &world.senses[ib.sense_id]);
    let mut score = 0.0;
    if ia.sense_id == ib.sense_id {
        score += if ia.is_accessory == ib.is_accessory {
            2.5
        } else {
            1.25 // accessory vs. the core product it serves
        };
    }
    if sa.category_id == sb.category_id {
        score += 1.0;
    }
    if ia.brand_id == ib.brand_id {
        score += 0.5;
    }
    score
}

pub fn generate_sts(world: &World, n_pairs: usize) -> Result<Vec<StsPair>> {
    if n_pairs == 0 {
        return Err(Error::Config("n_pairs must be positive".into()));
    }
    let mut rng = Rng::seed_from(derive_seed(world.spec().seed, "sts"));
    // identical, same sense, accessory relation, same category, same brand,
    // disjoint.
    let weights = [0.08, 0.22, 0.15, 0.20, 0.15, 0.20];
    let mut out = Vec::with_capacity(n_pairs);
    while out.len() < n_pairs {
        let kind = rng.weighted_index(&weights);
        let a = rng.index(world.items.len());
        let pick_b = |rng: &mut Rng| -> Option<usize> {
            let ia = &world.items[a];
            match kind {
                0 => Some(a),
                1 => {
                    let pool = &world.core_by_sense[ia.sense_id];
                    (pool.len() > 1).then(|| pool[rng.index(pool.len())])
                }
                2 => {
                    let pool = &world.accessories_by_sense[ia.sense_id];
                    (!pool.is_empty()).then(|| pool[rng.index(pool.len())])
                }
                3 => {
                    let cat = world.senses[ia.sense_id].category_id;
                    let pool = &world.by_category[cat];
                    (!pool.is_empty()).then(|| pool[rng.index(pool.len())])
                }
                _ => Some(rng.index(world.items.len())),
            }
        };
        let Some(b) = pick_b(&mut rng) else { continue };
        let (ta, tb) = (&world.items[a].title, &world.items[b].title);
        out.push(StsPair::new(ta, tb, gold_similarity(world, a, b))?);
    }
    Ok(out)
}

pub fn sts_tsv(pairs: &[StsPair]) -> String {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&format!("{}\t{}\t{}\n", p.sentence_a, p.sentence_b, p.gold));
    }
    out
}
