//! A generated encyclopedia of towns, people, companies and institutions.
//!
//! Every document is a list of template sentences over a small relation
//! set, so the rule-based models in [`super::llm`] can answer any prompt by
//! looking facts up instead of reading prose.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusError, CorpusStore, Document};
use crate::provider::scripted::ScriptedReranker;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityType {
    Town,
    Person,
    Company,
    Institution,
}

impl EntityType {
    pub fn noun(self) -> &'static str {
        match self {
            EntityType::Town => "town",
            EntityType::Person => "person",
            EntityType::Company => "company",
            EntityType::Institution => "institution",
        }
    }

    pub fn from_noun(s: &str) -> Option<Self> {
        [EntityType::Town, EntityType::Person, EntityType::Company, EntityType::Institution]
            .into_iter()
            .find(|t| t.noun().eq_ignore_ascii_case(s.trim()))
    }

    fn prefix(self) -> &'static str {
        match self {
            EntityType::Town => "t",
            EntityType::Person => "p",
            EntityType::Company => "c",
            EntityType::Institution => "i",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectKind {
    Entity(EntityType),
    Number(u32, u32),
    Year(u32, u32),
    Word(&'static [&'static str]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prefer {
    Larger,
    Smaller,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Relation {
    pub key: &'static str,
    pub subject: EntityType,
    pub object: ObjectKind,
    pub sentence: &'static str,
    pub question: &'static str,
    pub descriptor: &'static str,
    pub attribute: &'static str,
    pub compare: Option<(&'static str, Prefer)>,
}

impl Relation {
    pub fn sentence_for(&self, s: &str, o: &str) -> String {
        self.sentence.replace("{s}", s).replace("{o}", o)
    }

    pub fn question_for(&self, s: &str) -> String {
        self.question.replace("{s}", s)
    }

    pub fn descriptor_for(&self, s: &str) -> String {
        self.descriptor.replace("{s}", s)
    }

    pub fn links_entities(&self) -> bool {
        matches!(self.object, ObjectKind::Entity(_))
    }
}

const OCCUPATIONS: &[&str] = &["surveyor", "printer", "physician", "engineer", "botanist", "cartographer", "architect"];

pub const RELATIONS: &[Relation] = &[
    Relation {
        key: "founded_by",
        subject: EntityType::Town,
        object: ObjectKind::Entity(EntityType::Person),
        sentence: "{s} was founded by {o}.",
        question: "Who founded {s}?",
        descriptor: "the founder of {s}",
        attribute: "founder",
        compare: None,
    },
    Relation {
        key: "home_of",
        subject: EntityType::Town,
        object: ObjectKind::Entity(EntityType::Company),
        sentence: "{s} is home to {o}.",
        question: "Which company is based in {s}?",
        descriptor: "the company based in {s}",
        attribute: "major company",
        compare: None,
    },
    Relation {
        key: "population",
        subject: EntityType::Town,
        object: ObjectKind::Number(800, 90000),
        sentence: "{s} has a population of {o}.",
        question: "What is the population of {s}?",
        descriptor: "the population of {s}",
        attribute: "population",
        compare: Some(("Which town has the larger population, {a} or {b}?", Prefer::Larger)),
    },
    Relation {
        key: "established",
        subject: EntityType::Town,
        object: ObjectKind::Year(1600, 1900),
        sentence: "{s} was established in {o}.",
        question: "In what year was {s} established?",
        descriptor: "the founding year of {s}",
        attribute: "founding year",
        compare: Some(("Which town was established earlier, {a} or {b}?", Prefer::Smaller)),
    },
    Relation {
        key: "studied_at",
        subject: EntityType::Person,
        object: ObjectKind::Entity(EntityType::Institution),
        sentence: "{s} studied at {o}.",
        question: "Where did {s} study?",
        descriptor: "the institution where {s} studied",
        attribute: "education",
        compare: None,
    },
    Relation {
        key: "born",
        subject: EntityType::Person,
        object: ObjectKind::Year(1750, 1960),
        sentence: "{s} was born in the year {o}.",
        question: "In what year was {s} born?",
        descriptor: "the birth year of {s}",
        attribute: "birth year",
        compare: Some(("Who was born earlier, {a} or {b}?", Prefer::Smaller)),
    },
    Relation {
        key: "occupation",
        subject: EntityType::Person,
        object: ObjectKind::Word(OCCUPATIONS),
        sentence: "{s} worked as a {o}.",
        question: "What did {s} work as?",
        descriptor: "the occupation of {s}",
        attribute: "occupation",
        compare: None,
    },
    Relation {
        key: "headquartered",
        subject: EntityType::Company,
        object: ObjectKind::Entity(EntityType::Town),
        sentence: "{s} is headquartered in {o}.",
        question: "In which town is {s} headquartered?",
        descriptor: "the town where {s} is headquartered",
        attribute: "headquarters",
        compare: None,
    },
    Relation {
        key: "started_by",
        subject: EntityType::Company,
        object: ObjectKind::Entity(EntityType::Person),
        sentence: "{s} was started by {o}.",
        question: "Who started {s}?",
        descriptor: "the person who started {s}",
        attribute: "founder",
        compare: None,
    },
    Relation {
        key: "employees",
        subject: EntityType::Company,
        object: ObjectKind::Number(40, 20000),
        sentence: "{s} employs {o} people.",
        question: "How many people does {s} employ?",
        descriptor: "the workforce of {s}",
        attribute: "employees",
        compare: Some(("Which company employs more people, {a} or {b}?", Prefer::Larger)),
    },
    Relation {
        key: "led_by",
        subject: EntityType::Institution,
        object: ObjectKind::Entity(EntityType::Person),
        sentence: "{s} is led by {o}.",
        question: "Who leads {s}?",
        descriptor: "the leader of {s}",
        attribute: "leader",
        compare: None,
    },
    Relation {
        key: "opened",
        subject: EntityType::Institution,
        object: ObjectKind::Year(1700, 1950),
        sentence: "{s} opened in {o}.",
        question: "In what year did {s} open?",
        descriptor: "the opening year of {s}",
        attribute: "opening year",
        compare: Some(("Which institution opened earlier, {a} or {b}?", Prefer::Smaller)),
    },
    Relation {
        key: "students",
        subject: EntityType::Institution,
        object: ObjectKind::Number(300, 30000),
        sentence: "{s} enrolls {o} students.",
        question: "How many students does {s} enroll?",
        descriptor: "the enrollment of {s}",
        attribute: "students",
        compare: Some(("Which institution enrolls more students, {a} or {b}?", Prefer::Larger)),
    },
];

pub fn relation(key: &str) -> Option<&'static Relation> {
    RELATIONS.iter().find(|r| r.key == key)
}

/// Relation for an attribute name of a given subject type.
pub fn relation_for_attribute(etype: EntityType, attribute: &str) -> Option<&'static Relation> {
    RELATIONS.iter().find(|r| r.subject == etype && r.attribute.eq_ignore_ascii_case(attribute.trim()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub name: String,
    pub etype: EntityType,
    pub doc_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub doc_id: String,
    pub sentence: String,
}

impl Fact {
    pub fn rel(&self) -> &'static Relation {
        relation(&self.relation).expect("fact relation is registered")
    }
}

/// Scripted misbehaviour, keyed by the title of the document it applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    /// Bridge extraction on this source returns unparseable text.
    ExtractMalformed,
    /// Bridge extraction on this source names the title entity.
    ExtractTitle,
    /// Sub-question generation with this document as Doc B declines.
    SubqInvalid,
    /// Fusion whose last document is this one answers NONE.
    FusionNone,
    /// Bridge review of a question sourced here rejects it.
    PolishReject,
    PolishAdjust,
    PolishRework,
    /// Comparison scoring gives this subject a concreteness of 4.
    FilterReject,
    /// Comparison building from this source always fails.
    ConstructionFail,
    /// Comparison review of a question sourced here rejects it.
    ComparePolishReject,
    /// Comparison planning names a candidate instead of searching.
    PlanRecall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldSpec {
    pub seed: u64,
    pub towns: usize,
    pub people: usize,
    pub companies: usize,
    pub institutions: usize,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self { seed: 7, towns: 24, people: 30, companies: 12, institutions: 8 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct World {
    pub docs: Vec<Document>,
    pub entities: BTreeMap<String, Entity>,
    pub facts: Vec<Fact>,
    pub behaviors: BTreeMap<String, BTreeSet<Behavior>>,
    /// `(query, doc id, score)` entries for the simulated reranker.
    pub rerank_overrides: Vec<(String, String, f64)>,
}

const TOWN_HEADS: &[&str] = &[
    "Alder", "Birch", "Cedar", "Elm", "Fern", "Hazel", "Juniper", "Larch", "Maple", "Oak", "Rowan", "Willow", "Ash",
    "Briar", "Clover", "Heather", "Ivy", "Laurel", "Myrtle", "Thorn", "Sorrel", "Tansy", "Yarrow", "Aspen",
];
const TOWN_TAILS: &[&str] = &["Vale", "Point", "Ford", "Crossing", "Haven", "Mill", "Ridge", "Hollow", "Bay", "Field", "Brook"];
const GIVEN: &[&str] = &[
    "Bram", "Cora", "Dmitri", "Elena", "Farid", "Greta", "Hugo", "Ines", "Jonas", "Kaya", "Lorenz", "Mira", "Nils",
    "Odile", "Pavel", "Quinn", "Rosa", "Soren", "Talia", "Ugo", "Vera", "Wendell", "Yusuf", "Zora",
];
const FAMILY: &[&str] = &[
    "Okoro", "Lindqvist", "Marchetti", "Abernathy", "Castellanos", "Draper", "Eriksen", "Fairweather", "Gallagher",
    "Haldane", "Iwasaki", "Jovanovic", "Kowalczyk", "Lachance", "Moreau", "Nakagawa", "Oyelaran", "Pemberton",
];
const FIRM_HEADS: &[&str] = &["Harrow", "Kestrel", "Lumen", "Meridian", "Norcross", "Quarry", "Sable", "Tallis", "Verity", "Wexford"];
const FIRM_TAILS: &[&str] = &["Textiles", "Ironworks", "Press", "Instruments", "Shipping", "Mills", "Optics", "Ceramics"];
const SCHOOL_HEADS: &[&str] = &["Northgate", "Eastbrook", "Highmoor", "Kingsreach", "Lowfield", "Stonebridge", "Westmere", "Greyhaven"];
const SCHOOL_TAILS: &[&str] = &["College", "Institute", "Academy", "Polytechnic"];

fn unique_name(rng: &mut ChaCha8Rng, taken: &mut BTreeSet<String>, heads: &[&str], tails: &[&str]) -> String {
    for _ in 0..1000 {
        let n = format!("{} {}", heads.choose(rng).unwrap(), tails.choose(rng).unwrap());
        if taken.insert(n.clone()) {
            return n;
        }
    }
    // Name space exhausted: disambiguate with an ordinal word.
    let mut i = 2;
    loop {
        let n = format!("{} {} {}", heads.choose(rng).unwrap(), tails.choose(rng).unwrap(), roman(i));
        if taken.insert(n.clone()) {
            return n;
        }
        i += 1;
    }
}

fn roman(mut n: usize) -> String {
    let table = [(10, "X"), (9, "IX"), (5, "V"), (4, "IV"), (1, "I")];
    let mut s = String::new();
    for (v, r) in table {
        while n >= v {
            s.push_str(r);
            n -= v;
        }
    }
    s
}

impl World {
    /// Deterministic world for `spec`. Town `i` is founded by person `i`, so
    /// every town has its own bridge entity.
    pub fn generate(spec: WorldSpec) -> World {
        assert!(spec.people >= spec.towns, "need at least one founder per town");
        assert!(spec.institutions > 0 && spec.companies > 0, "need companies and institutions");
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut taken = BTreeSet::new();
        let towns: Vec<String> = (0..spec.towns).map(|_| unique_name(&mut rng, &mut taken, TOWN_HEADS, TOWN_TAILS)).collect();
        let people: Vec<String> = (0..spec.people).map(|_| unique_name(&mut rng, &mut taken, GIVEN, FAMILY)).collect();
        let companies: Vec<String> =
            (0..spec.companies).map(|_| unique_name(&mut rng, &mut taken, FIRM_HEADS, FIRM_TAILS)).collect();
        let schools: Vec<String> =
            (0..spec.institutions).map(|_| unique_name(&mut rng, &mut taken, SCHOOL_HEADS, SCHOOL_TAILS)).collect();

        let mut w = World::default();
        let groups = [
            (EntityType::Town, &towns),
            (EntityType::Person, &people),
            (EntityType::Company, &companies),
            (EntityType::Institution, &schools),
        ];
        for (etype, names) in groups {
            for (i, n) in names.iter().enumerate() {
                let doc_id = format!("{}{:03}", etype.prefix(), i);
                w.entities.insert(n.clone(), Entity { name: n.clone(), etype, doc_id });
            }
        }

        let mut facts: BTreeMap<String, Vec<(&'static str, String)>> = BTreeMap::new();
        let value = |rng: &mut ChaCha8Rng, kind: ObjectKind| match kind {
            ObjectKind::Number(lo, hi) => (rng.random_range(lo..=hi) / 10 * 10).to_string(),
            ObjectKind::Year(lo, hi) => rng.random_range(lo..=hi).to_string(),
            ObjectKind::Word(ws) => ws.choose(rng).unwrap().to_string(),
            ObjectKind::Entity(_) => unreachable!(),
        };
        for (i, t) in towns.iter().enumerate() {
            let f = facts.entry(t.clone()).or_default();
            f.push(("founded_by", people[i].clone()));
            if let Some(c) = companies.get(i) {
                f.push(("home_of", c.clone()));
            }
            f.push(("population", value(&mut rng, relation("population").unwrap().object)));
            f.push(("established", value(&mut rng, relation("established").unwrap().object)));
        }
        for p in &people {
            let f = facts.entry(p.clone()).or_default();
            f.push(("studied_at", schools.choose(&mut rng).unwrap().clone()));
            f.push(("born", value(&mut rng, relation("born").unwrap().object)));
            f.push(("occupation", value(&mut rng, relation("occupation").unwrap().object)));
        }
        for (j, c) in companies.iter().enumerate() {
            let f = facts.entry(c.clone()).or_default();
            let town = towns.get(j).cloned().unwrap_or_else(|| towns.choose(&mut rng).unwrap().clone());
            f.push(("headquartered", town));
            f.push(("started_by", people.choose(&mut rng).unwrap().clone()));
            f.push(("employees", value(&mut rng, relation("employees").unwrap().object)));
        }
        let mut leaders = people.clone();
        leaders.shuffle(&mut rng);
        for (k, s) in schools.iter().enumerate() {
            let f = facts.entry(s.clone()).or_default();
            f.push(("led_by", leaders[k % leaders.len()].clone()));
            f.push(("opened", value(&mut rng, relation("opened").unwrap().object)));
            f.push(("students", value(&mut rng, relation("students").unwrap().object)));
        }

        let mut ordered: Vec<&Entity> = w.entities.values().collect();
        ordered.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        let mut docs = Vec::new();
        let mut all_facts = Vec::new();
        for e in ordered {
            let mut sentences = vec![format!("{} is a {}.", e.name, e.etype.noun())];
            for (key, obj) in &facts[&e.name] {
                let rel = relation(key).unwrap();
                let sentence = rel.sentence_for(&e.name, obj);
                sentences.push(sentence.clone());
                all_facts.push(Fact {
                    subject: e.name.clone(),
                    relation: key.to_string(),
                    object: obj.clone(),
                    doc_id: e.doc_id.clone(),
                    sentence,
                });
            }
            docs.push(Document::new(e.doc_id.clone(), e.name.clone(), sentences.join(" ")));
        }
        w.docs = docs;
        w.facts = all_facts;
        w
    }

    pub fn store(&self) -> Result<CorpusStore, CorpusError> {
        CorpusStore::from_documents(self.docs.clone())
    }

    pub fn doc(&self, id: &str) -> Option<&Document> {
        self.docs.iter().find(|d| d.id == id)
    }

    pub fn doc_by_title(&self, title: &str) -> Option<&Document> {
        self.docs.iter().find(|d| d.title == title)
    }

    /// Entity a document is about (none for decoys).
    pub fn entity_of_doc(&self, doc_id: &str) -> Option<&Entity> {
        self.entities.values().find(|e| e.doc_id == doc_id)
    }

    pub fn docs_of_type(&self, etype: EntityType) -> Vec<&Document> {
        self.docs.iter().filter(|d| self.entity_of_doc(&d.id).is_some_and(|e| e.etype == etype)).collect()
    }

    /// Facts stated in a document, in text order.
    pub fn facts_in_doc(&self, doc_id: &str) -> Vec<&Fact> {
        self.facts.iter().filter(|f| f.doc_id == doc_id).collect()
    }

    /// A fact about `subject` under relation `key`, preferring the subject's
    /// own document.
    pub fn fact(&self, subject: &str, key: &str) -> Option<&Fact> {
        let own = self.entities.get(subject).map(|e| e.doc_id.as_str());
        let mut it = self.facts.iter().filter(|f| f.subject == subject && f.relation == key);
        let all: Vec<&Fact> = it.by_ref().collect();
        all.iter().find(|f| Some(f.doc_id.as_str()) == own).or(all.first()).copied()
    }

    pub fn behaves(&self, title: &str, b: Behavior) -> bool {
        self.behaviors.get(title).is_some_and(|s| s.contains(&b))
    }

    pub fn set_behavior(&mut self, title: &str, b: Behavior) {
        self.behaviors.entry(title.to_string()).or_default().insert(b);
    }

    /// Add a document that restates the first fact about `entity` and that
    /// the reranker places first for that entity. Returns the document id.
    pub fn add_decoy(&mut self, entity: &str) -> String {
        let id = format!("x{:03}", self.docs.iter().filter(|d| d.id.starts_with('x')).count());
        let title = format!("{entity} Papers");
        let e = self.entities.get(entity).expect("decoy for a known entity").clone();
        let first = self.facts_in_doc(&e.doc_id).first().map(|f| (*f).clone()).expect("entity has facts");
        let text = format!("The {title} are a collection of letters. {}", first.sentence);
        self.facts.push(Fact { doc_id: id.clone(), ..first });
        self.docs.push(Document::new(id.clone(), title, text));
        self.rerank_overrides.push((entity.to_string(), id.clone(), 10.0));
        id
    }

    /// Lexical reranker plus this world's overrides.
    pub fn reranker(&self) -> ScriptedReranker {
        self.rerank_overrides
            .iter()
            .fold(ScriptedReranker::lexical(), |r, (q, d, s)| r.with_score(q, d, *s))
    }

    /// Facts whose sentence occurs in any of `passages`.
    pub fn facts_in_passages(&self, passages: &[&str]) -> Vec<&Fact> {
        self.facts.iter().filter(|f| passages.iter().any(|p| p.contains(&f.sentence))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_linked() {
        let a = World::generate(WorldSpec::default());
        let b = World::generate(WorldSpec::default());
        assert_eq!(a.docs, b.docs);
        let spec = WorldSpec::default();
        assert_eq!(a.docs.len(), spec.towns + spec.people + spec.companies + spec.institutions);
        for f in &a.facts {
            if f.rel().links_entities() {
                assert!(a.entities.contains_key(&f.object), "{} has no document", f.object);
            }
            assert!(a.doc(&f.doc_id).unwrap().text.contains(&f.sentence));
        }
        let town = &a.docs_of_type(EntityType::Town)[0];
        assert_eq!(a.facts_in_doc(&town.id)[0].relation, "founded_by");
    }

    #[test]
    fn decoy_restates_first_fact() {
        let mut w = World::generate(WorldSpec::default());
        let person = w.docs_of_type(EntityType::Person)[0].title.clone();
        let id = w.add_decoy(&person);
        let d = w.doc(&id).unwrap();
        assert!(d.text.contains(&w.facts_in_doc(&id)[0].sentence));
        assert_eq!(w.facts_in_doc(&id)[0].subject, person);
        assert!(w.entity_of_doc(&id).is_none());
    }
}
