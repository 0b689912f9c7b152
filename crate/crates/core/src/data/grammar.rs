//! Template grammar for synthetic cooking procedures.
//!
//! A procedure picks a cooking method and an ingredient set, then walks a
//! sequence of template families (prepare, heat, combine, add, cook, finish).
//! Families carry ordering constraints, and ingredient slots are filled in a
//! canonical order, so the next step is largely predictable from the
//! ingredients and the steps observed so far.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

pub const GRAMMAR_TAG: &str = "recipe-grammar/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IngredientKind {
    Vegetable,
    Protein,
    Starch,
    Dairy,
    Liquid,
    Spice,
    Sweet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngredientSpec {
    pub name: String,
    pub kind: IngredientKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub name: String,
    pub vessel: String,
    pub verb: String,
    pub fat: String,
    pub dish: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateFamily {
    pub name: String,
    #[serde(default)]
    pub opening: bool,
    #[serde(default)]
    pub body: bool,
    #[serde(default)]
    pub closing: bool,
    /// Families that must all have appeared earlier in the procedure.
    #[serde(default)]
    pub requires: Vec<String>,
    #[serde(default)]
    pub max_uses: Option<usize>,
    #[serde(default = "one")]
    pub weight: f64,
    pub templates: Vec<String>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrammarConfig {
    pub min_steps: usize,
    pub max_steps: usize,
    /// Step count is `min_steps + Binomial(max_steps - min_steps, step_count_p)`.
    pub step_count_p: f64,
    pub min_ingredients: usize,
    pub max_ingredients: usize,
    pub ingredients: Vec<IngredientSpec>,
    pub methods: Vec<MethodSpec>,
    pub families: Vec<TemplateFamily>,
}

impl Default for GrammarConfig {
    fn default() -> Self {
        use IngredientKind::*;
        let ing = |name: &str, kind| IngredientSpec {
            name: name.into(),
            kind,
        };
        let method = |name: &str, vessel: &str, verb: &str, fat: &str, dish: &str| MethodSpec {
            name: name.into(),
            vessel: vessel.into(),
            verb: verb.into(),
            fat: fat.into(),
            dish: dish.into(),
        };
        let fam = |name: &str, placement: (bool, bool, bool), requires: &[&str], max_uses, weight, templates: &[&str]| {
            TemplateFamily {
                name: name.into(),
                opening: placement.0,
                body: placement.1,
                closing: placement.2,
                requires: requires.iter().map(|s| s.to_string()).collect(),
                max_uses,
                weight,
                templates: templates.iter().map(|s| s.to_string()).collect(),
            }
        };
        Self {
            min_steps: 4,
            max_steps: 9,
            step_count_p: 0.5,
            min_ingredients: 3,
            max_ingredients: 6,
            ingredients: vec![
                ing("onion", Vegetable),
                ing("garlic", Vegetable),
                ing("carrot", Vegetable),
                ing("broccoli", Vegetable),
                ing("pepper", Vegetable),
                ing("spinach", Vegetable),
                ing("tomato", Vegetable),
                ing("mushroom", Vegetable),
                ing("zucchini", Vegetable),
                ing("potato", Vegetable),
                ing("chicken", Protein),
                ing("beef", Protein),
                ing("pork", Protein),
                ing("tofu", Protein),
                ing("shrimp", Protein),
                ing("eggs", Protein),
                ing("rice", Starch),
                ing("pasta", Starch),
                ing("noodles", Starch),
                ing("flour", Starch),
                ing("bread", Starch),
                ing("milk", Dairy),
                ing("cheese", Dairy),
                ing("cream", Dairy),
                ing("yogurt", Dairy),
                ing("broth", Liquid),
                ing("wine", Liquid),
                ing("vinegar", Liquid),
                ing("salt", Spice),
                ing("paprika", Spice),
                ing("cumin", Spice),
                ing("basil", Spice),
                ing("parsley", Spice),
                ing("sugar", Sweet),
                ing("honey", Sweet),
                ing("chocolate", Sweet),
            ],
            methods: vec![
                method("fry", "skillet", "fry", "oil", "stirfry"),
                method("simmer", "pot", "simmer", "butter", "soup"),
                method("bake", "casserole", "bake", "butter", "gratin"),
                method("roast", "tray", "roast", "oil", "roast"),
            ],
            families: vec![
                fam(
                    "prepare",
                    (true, true, false),
                    &[],
                    None,
                    2.0,
                    &[
                        "chop the {ing} into small pieces",
                        "dice the {ing} and set aside",
                        "slice the {ing} into thin strips",
                        "wash and peel the {ing}",
                    ],
                ),
                fam(
                    "heat",
                    (true, true, false),
                    &[],
                    Some(1),
                    2.0,
                    &[
                        "heat the {fat} in a large {vessel}",
                        "warm the {fat} in the {vessel} over medium heat",
                    ],
                ),
                fam(
                    "combine",
                    (false, true, false),
                    &[],
                    Some(2),
                    1.0,
                    &[
                        "in a bowl combine the {ing} and the {ing}",
                        "whisk the {ing} together with the {ing}",
                    ],
                ),
                fam(
                    "add",
                    (false, true, false),
                    &["heat"],
                    None,
                    3.0,
                    &[
                        "add the {ing} to the {vessel}",
                        "stir the {ing} into the {vessel}",
                        "add the {ing} and {verb} for {time} minutes",
                    ],
                ),
                fam(
                    "cook",
                    (false, true, false),
                    &["add"],
                    None,
                    2.0,
                    &[
                        "{verb} for {time} minutes until tender",
                        "cover the {vessel} and {verb} for {time} minutes",
                        "{verb} the mixture until golden brown",
                    ],
                ),
                fam(
                    "finish",
                    (false, false, true),
                    &[],
                    None,
                    1.0,
                    &[
                        "season with {spice} and serve the {dish}",
                        "garnish with the {ing} and serve warm",
                        "transfer the {dish} to a plate and serve",
                    ],
                ),
            ],
        }
    }
}

const TIMES: [&str; 4] = ["5", "10", "15", "20"];

/// One generated procedure in word form.
#[derive(Debug, Clone, PartialEq)]
pub struct RawProcedure {
    /// Indices into the ingredient inventory, in canonical (kind, index) order.
    pub ingredients: Vec<u32>,
    pub steps: Vec<Vec<String>>,
}

impl GrammarConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_steps < 2 {
            bail!(Config, "min_steps must be at least 2 (an opening and a closing step)");
        }
        if self.min_steps > self.max_steps {
            bail!(Config, "min_steps {} exceeds max_steps {}", self.min_steps, self.max_steps);
        }
        if !(0.0..=1.0).contains(&self.step_count_p) {
            bail!(Config, "step_count_p must lie in [0, 1]");
        }
        if self.min_ingredients == 0 || self.min_ingredients > self.max_ingredients {
            bail!(Config, "invalid ingredient count bounds");
        }
        if self.max_ingredients > self.ingredients.len() {
            bail!(Config, "max_ingredients exceeds the ingredient inventory size");
        }
        if self.methods.is_empty() {
            bail!(Config, "no cooking methods configured");
        }
        if self.families.is_empty() {
            bail!(Config, "no template families configured");
        }
        for f in &self.families {
            if f.templates.is_empty() {
                bail!(Config, "template family {:?} is empty", f.name);
            }
            if !(f.weight > 0.0) {
                bail!(Config, "template family {:?} needs a positive weight", f.name);
            }
            for r in &f.requires {
                if !self.families.iter().any(|g| &g.name == r) {
                    bail!(Config, "family {:?} requires unknown family {r:?}", f.name);
                }
            }
        }
        let unconstrained = |f: &&TemplateFamily| f.requires.is_empty() && f.max_uses.is_none();
        if !self.families.iter().filter(|f| f.opening).any(|f| f.requires.is_empty()) {
            bail!(Config, "no opening family without prerequisites");
        }
        if !self.families.iter().filter(|f| f.body).any(|f| unconstrained(&f)) {
            bail!(Config, "need at least one unconstrained body family");
        }
        if !self.families.iter().filter(|f| f.closing).any(|f| f.requires.is_empty()) {
            bail!(Config, "no closing family without prerequisites");
        }
        Ok(())
    }

    /// Closed-form mean step count of the configured distribution.
    pub fn expected_steps(&self) -> f64 {
        self.min_steps as f64 + (self.max_steps - self.min_steps) as f64 * self.step_count_p
    }

    /// Every word the grammar can emit, ingredient names included.
    pub fn lexicon(&self) -> Vec<String> {
        let mut words: Vec<String> = Vec::new();
        for f in &self.families {
            for t in &f.templates {
                words.extend(t.split_whitespace().filter(|w| !w.starts_with('{')).map(String::from));
            }
        }
        for m in &self.methods {
            words.extend([&m.vessel, &m.verb, &m.fat, &m.dish].map(|s| s.to_lowercase()));
        }
        words.extend(self.ingredients.iter().map(|i| i.name.to_lowercase()));
        words.extend(TIMES.iter().map(|s| s.to_string()));
        words.sort();
        words.dedup();
        words
    }

    pub fn generate(&self, rng: &mut ChaCha8Rng) -> Result<RawProcedure> {
        let n_steps = self.min_steps
            + (0..self.max_steps - self.min_steps)
                .filter(|_| rng.random_bool(self.step_count_p))
                .count();
        let method = self.methods.choose(rng).expect("validated non-empty");

        let n_ing = rng.random_range(self.min_ingredients..=self.max_ingredients);
        let mut ingredients: Vec<u32> =
            rand::seq::index::sample(rng, self.ingredients.len(), n_ing)
                .into_iter()
                .map(|i| i as u32)
                .collect();
        ingredients.sort_by_key(|&i| (self.ingredients[i as usize].kind, i));

        let mut uses = vec![0usize; self.families.len()];
        let mut cursor = 0usize;
        let mut steps = Vec::with_capacity(n_steps);
        for t in 0..n_steps {
            let candidates: Vec<usize> = (0..self.families.len())
                .filter(|&f| {
                    let fam = &self.families[f];
                    let placed = if t == 0 {
                        fam.opening
                    } else if t + 1 == n_steps {
                        fam.closing
                    } else {
                        fam.body
                    };
                    placed
                        && fam.max_uses.is_none_or(|m| uses[f] < m)
                        && fam.requires.iter().all(|r| {
                            self.families
                                .iter()
                                .position(|g| &g.name == r)
                                .is_some_and(|g| uses[g] > 0)
                        })
                })
                .collect();
            let family = *candidates
                .choose_weighted(rng, |&f| self.families[f].weight)
                .map_err(|_| crate::error::Error::Config("grammar reached a dead end".into()))?;
            uses[family] += 1;
            let template = self.families[family].templates.choose(rng).expect("validated");
            steps.push(self.fill(template, method, &ingredients, &mut cursor, rng));
        }
        Ok(RawProcedure { ingredients, steps })
    }

    fn fill(
        &self,
        template: &str,
        method: &MethodSpec,
        ingredients: &[u32],
        cursor: &mut usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<String> {
        template
            .split_whitespace()
            .map(|w| match w {
                "{ing}" => {
                    let id = ingredients[*cursor % ingredients.len()];
                    *cursor += 1;
                    self.ingredients[id as usize].name.clone()
                }
                "{spice}" => ingredients
                    .iter()
                    .map(|&i| &self.ingredients[i as usize])
                    .find(|i| i.kind == IngredientKind::Spice)
                    .map_or_else(|| "salt".to_string(), |i| i.name.clone()),
                "{vessel}" => method.vessel.clone(),
                "{verb}" => method.verb.clone(),
                "{fat}" => method.fat.clone(),
                "{dish}" => method.dish.clone(),
                "{time}" => TIMES.choose(rng).expect("non-empty").to_string(),
                other => other.to_string(),
            })
            .map(|w| w.to_lowercase())
            .collect()
    }
}
