//! TTP instances: the data model, the TSPLIB-style text format used by the
//! public benchmark set, and a seeded generator.
//!
//! Cities are indexed from 0 internally; city 0 is the start/end city and
//! never holds items. The text format uses 1-based ids for cities and items.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{self, PackingPlan, Tour};
use crate::solvers::{tour as tour_heuristics, Budget};

#[derive(Debug, Error, PartialEq)]
pub enum InstanceError {
    #[error("missing header `{0}`")]
    MissingHeader(String),
    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("city index {index} out of range for {n} cities")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    #[inline]
    pub fn euclidean(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EdgeWeightKind {
    #[default]
    CeilEuclidean2D,
    Euclidean2D,
}

impl EdgeWeightKind {
    fn keyword(self) -> &'static str {
        match self {
            EdgeWeightKind::CeilEuclidean2D => "CEIL_2D",
            EdgeWeightKind::Euclidean2D => "EUC_2D",
        }
    }
}

impl FromStr for EdgeWeightKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CEIL_2D" => Ok(EdgeWeightKind::CeilEuclidean2D),
            "EUC_2D" => Ok(EdgeWeightKind::Euclidean2D),
            other => Err(format!("unsupported edge weight type `{other}`")),
        }
    }
}

/// Knapsack data type of the benchmark set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KpType {
    Uncorrelated,
    UncorrelatedSimilarWeights,
    BoundedStronglyCorrelated,
}

impl KpType {
    pub const ALL: [KpType; 3] = [
        KpType::Uncorrelated,
        KpType::UncorrelatedSimilarWeights,
        KpType::BoundedStronglyCorrelated,
    ];

    /// Ordinal code used as a numeric feature.
    pub fn code(self) -> u8 {
        match self {
            KpType::Uncorrelated => 0,
            KpType::UncorrelatedSimilarWeights => 1,
            KpType::BoundedStronglyCorrelated => 2,
        }
    }

    fn label(self) -> &'static str {
        match self {
            KpType::Uncorrelated => "uncorrelated",
            KpType::UncorrelatedSimilarWeights => "uncorrelated, similar weights",
            KpType::BoundedStronglyCorrelated => "bounded strongly corr",
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            KpType::Uncorrelated => "unc",
            KpType::UncorrelatedSimilarWeights => "usw",
            KpType::BoundedStronglyCorrelated => "bsc",
        }
    }
}

impl FromStr for KpType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        if s.contains("strongly") || s == "bsc" {
            Ok(KpType::BoundedStronglyCorrelated)
        } else if s.contains("similar") || s == "usw" {
            Ok(KpType::UncorrelatedSimilarWeights)
        } else if s.starts_with("uncorrelated") || s == "unc" {
            Ok(KpType::Uncorrelated)
        } else {
            Err(format!("unknown knapsack data type `{s}`"))
        }
    }
}

impl fmt::Display for KpType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Item {
    /// 1-based item id, equal to the item's position in `TtpInstance::items` plus one.
    pub id: usize,
    /// 0-based city index, never 0.
    pub city: usize,
    pub profit: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtpInstance {
    pub name: String,
    pub coords: Vec<Point>,
    pub edge_weight_kind: EdgeWeightKind,
    pub items: Vec<Item>,
    pub capacity: f64,
    pub min_speed: f64,
    pub max_speed: f64,
    pub renting_rate: f64,
    pub kp_type: KpType,
}

impl TtpInstance {
    pub fn dimension(&self) -> usize {
        self.coords.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    /// Speed loss per unit of carried weight, `(v_max - v_min) / W`.
    #[inline]
    pub fn nu(&self) -> f64 {
        (self.max_speed - self.min_speed) / self.capacity
    }

    pub fn total_weight(&self) -> f64 {
        self.items.iter().map(|it| it.weight).sum()
    }

    /// Checked distance between two 0-based city indices.
    pub fn distance(&self, i: usize, j: usize) -> Result<f64, InstanceError> {
        let n = self.dimension();
        for index in [i, j] {
            if index >= n {
                return Err(InstanceError::IndexOutOfRange { index, n });
            }
        }
        Ok(self.dist(i, j))
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        let d = self.coords[i].euclidean(&self.coords[j]);
        match self.edge_weight_kind {
            EdgeWeightKind::CeilEuclidean2D => d.ceil(),
            EdgeWeightKind::Euclidean2D => d,
        }
    }

    /// Item indices grouped by city.
    pub fn items_by_city(&self) -> Vec<Vec<usize>> {
        let mut by_city = vec![Vec::new(); self.dimension()];
        for (k, item) in self.items.iter().enumerate() {
            by_city[item.city].push(k);
        }
        by_city
    }

    pub fn check_invariants(&self) -> Result<(), InstanceError> {
        let fail = |msg: String| Err(InstanceError::InvariantViolation(msg));
        let n = self.dimension();
        if n < 2 {
            return fail(format!("need at least 2 cities, got {n}"));
        }
        if self
            .coords
            .iter()
            .any(|p| !p.x.is_finite() || !p.y.is_finite())
        {
            return fail("non-finite coordinate".into());
        }
        if !(self.min_speed > 0.0) {
            return fail(format!("min speed {} must be positive", self.min_speed));
        }
        if !(self.min_speed < self.max_speed) {
            return fail(format!(
                "min speed {} must be below max speed {}",
                self.min_speed, self.max_speed
            ));
        }
        if !(self.renting_rate >= 0.0) || !self.renting_rate.is_finite() {
            return fail(format!(
                "renting rate {} must be nonnegative",
                self.renting_rate
            ));
        }
        for (k, item) in self.items.iter().enumerate() {
            if item.id != k + 1 {
                return fail(format!(
                    "item ids must be contiguous from 1, found {} at position {}",
                    item.id,
                    k + 1
                ));
            }
            if item.city == 0 || item.city >= n {
                return fail(format!(
                    "item {} assigned to city {}",
                    item.id,
                    item.city + 1
                ));
            }
            if !(item.profit > 0.0 && item.weight > 0.0)
                || !item.profit.is_finite()
                || !item.weight.is_finite()
            {
                return fail(format!(
                    "item {} must have positive profit and weight",
                    item.id
                ));
            }
        }
        let total = self.total_weight();
        if !(self.capacity > 0.0) || !self.capacity.is_finite() {
            return fail(format!("capacity {} must be positive", self.capacity));
        }
        if self.capacity >= total {
            return fail(format!(
                "capacity {} is not below the total item weight {}",
                self.capacity, total
            ));
        }
        Ok(())
    }
}

const SECTION_COORDS: &str = "NODE_COORD_SECTION";
const SECTION_ITEMS: &str = "ITEMS SECTION";

#[derive(PartialEq)]
enum Section {
    Header,
    Coords,
    Items,
}

fn malformed(line: usize, reason: impl Into<String>) -> InstanceError {
    InstanceError::MalformedLine {
        line,
        reason: reason.into(),
    }
}

fn parse_num<T: FromStr>(token: Option<&str>, line: usize, what: &str) -> Result<T, InstanceError> {
    let token = token.ok_or_else(|| malformed(line, format!("missing {what}")))?;
    token
        .parse()
        .map_err(|_| malformed(line, format!("cannot parse {what} from `{token}`")))
}

/// Parses the TSPLIB-style TTP format.
pub fn parse_instance(text: &str) -> Result<TtpInstance, InstanceError> {
    let mut headers: Vec<(String, String, usize)> = Vec::new();
    let mut coord_rows: Vec<(usize, Point, usize)> = Vec::new();
    let mut item_rows: Vec<(usize, Item, usize)> = Vec::new();
    let mut section = Section::Header;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.eq_ignore_ascii_case("EOF") {
            continue;
        }
        let upper = line.to_ascii_uppercase();
        if upper.starts_with(SECTION_COORDS) {
            section = Section::Coords;
            continue;
        }
        if upper.starts_with(SECTION_ITEMS) {
            section = Section::Items;
            continue;
        }
        match section {
            Section::Header => {
                let (key, value) = line
                    .split_once(':')
                    .ok_or_else(|| malformed(lineno, "expected `KEY: value`"))?;
                headers.push((normalize_key(key), value.trim().to_string(), lineno));
            }
            Section::Coords => {
                let mut tok = line.split_whitespace();
                let id: usize = parse_num(tok.next(), lineno, "node index")?;
                let x: f64 = parse_num(tok.next(), lineno, "x coordinate")?;
                let y: f64 = parse_num(tok.next(), lineno, "y coordinate")?;
                if tok.next().is_some() {
                    return Err(malformed(lineno, "trailing tokens in coordinate row"));
                }
                coord_rows.push((id, Point::new(x, y), lineno));
            }
            Section::Items => {
                let mut tok = line.split_whitespace();
                let id: usize = parse_num(tok.next(), lineno, "item index")?;
                let profit: f64 = parse_num(tok.next(), lineno, "profit")?;
                let weight: f64 = parse_num(tok.next(), lineno, "weight")?;
                let city: usize = parse_num(tok.next(), lineno, "assigned node")?;
                if tok.next().is_some() {
                    return Err(malformed(lineno, "trailing tokens in item row"));
                }
                if city == 0 {
                    return Err(malformed(lineno, "node numbers start at 1"));
                }
                item_rows.push((
                    id,
                    Item {
                        id,
                        city: city - 1,
                        profit,
                        weight,
                    },
                    lineno,
                ));
            }
        }
    }

    let header = |key: &str| -> Result<(&str, usize), InstanceError> {
        headers
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, l)| (v.as_str(), *l))
            .ok_or_else(|| InstanceError::MissingHeader(key.to_string()))
    };
    let numeric = |key: &str| -> Result<f64, InstanceError> {
        let (v, l) = header(key)?;
        parse_num(Some(v), l, key)
    };

    let name = header("PROBLEM NAME")?.0.to_string();
    let (kp_raw, kp_line) = header("KNAPSACK DATA TYPE")?;
    let kp_type = kp_raw.parse().map_err(|e: String| malformed(kp_line, e))?;
    let (dim_raw, dim_line) = header("DIMENSION")?;
    let dimension: usize = parse_num(Some(dim_raw), dim_line, "DIMENSION")?;
    let (items_raw, items_line) = header("NUMBER OF ITEMS")?;
    let num_items: usize = parse_num(Some(items_raw), items_line, "NUMBER OF ITEMS")?;
    let capacity = numeric("CAPACITY OF KNAPSACK")?;
    let min_speed = numeric("MIN SPEED")?;
    let max_speed = numeric("MAX SPEED")?;
    let renting_rate = numeric("RENTING RATIO")?;
    let edge_weight_kind = match header("EDGE_WEIGHT_TYPE") {
        Ok((v, l)) => v.parse().map_err(|e: String| malformed(l, e))?,
        Err(_) => EdgeWeightKind::default(),
    };

    let mut coords = vec![None; dimension];
    for (id, p, l) in coord_rows {
        if id == 0 || id > dimension {
            return Err(malformed(
                l,
                format!("node index {id} outside 1..={dimension}"),
            ));
        }
        if coords[id - 1].replace(p).is_some() {
            return Err(malformed(l, format!("duplicate node index {id}")));
        }
    }
    let coords = coords
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            p.ok_or_else(|| {
                InstanceError::InvariantViolation(format!("missing coordinates for node {}", i + 1))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    if item_rows.len() != num_items {
        return Err(InstanceError::InvariantViolation(format!(
            "NUMBER OF ITEMS declares {num_items} but {} rows were found",
            item_rows.len()
        )));
    }
    let mut items = vec![None; num_items];
    for (id, item, l) in item_rows {
        if id == 0 || id > num_items {
            return Err(malformed(
                l,
                format!("item index {id} outside 1..={num_items}"),
            ));
        }
        if item.city >= dimension {
            return Err(malformed(
                l,
                format!("item {id} assigned to missing node {}", item.city + 1),
            ));
        }
        if items[id - 1].replace(item).is_some() {
            return Err(malformed(l, format!("duplicate item index {id}")));
        }
    }
    let items = items
        .into_iter()
        .map(|it| it.expect("all ids filled"))
        .collect();

    let inst = TtpInstance {
        name,
        coords,
        edge_weight_kind,
        items,
        capacity,
        min_speed,
        max_speed,
        renting_rate,
        kp_type,
    };
    inst.check_invariants()?;
    Ok(inst)
}

fn normalize_key(key: &str) -> String {
    key.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_ascii_uppercase()
}

/// Serializes an instance. Numbers use the shortest representation that
/// parses back to the same `f64`, so the round trip is exact.
pub fn write_instance(inst: &TtpInstance) -> String {
    let mut out = String::with_capacity(64 * (inst.dimension() + inst.num_items()) + 512);
    let _ = writeln!(out, "PROBLEM NAME:\t{}", inst.name);
    let _ = writeln!(out, "KNAPSACK DATA TYPE:\t{}", inst.kp_type);
    let _ = writeln!(out, "DIMENSION:\t{}", inst.dimension());
    let _ = writeln!(out, "NUMBER OF ITEMS:\t{}", inst.num_items());
    let _ = writeln!(out, "CAPACITY OF KNAPSACK:\t{}", inst.capacity);
    let _ = writeln!(out, "MIN SPEED:\t{}", inst.min_speed);
    let _ = writeln!(out, "MAX SPEED:\t{}", inst.max_speed);
    let _ = writeln!(out, "RENTING RATIO:\t{}", inst.renting_rate);
    let _ = writeln!(
        out,
        "EDGE_WEIGHT_TYPE:\t{}",
        inst.edge_weight_kind.keyword()
    );
    let _ = writeln!(out, "{SECTION_COORDS}\t(INDEX, X, Y): ");
    for (i, p) in inst.coords.iter().enumerate() {
        let _ = writeln!(out, "{}\t{}\t{}", i + 1, p.x, p.y);
    }
    let _ = writeln!(
        out,
        "{SECTION_ITEMS}\t(INDEX, PROFIT, WEIGHT, ASSIGNED NODE NUMBER): "
    );
    for item in &inst.items {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            item.id,
            item.profit,
            item.weight,
            item.city + 1
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub n_cities: usize,
    /// Items per city (every city but the first), one of 1, 3, 5, 10.
    pub item_factor: usize,
    pub kp_type: KpType,
    /// Capacity class `c` in 1..=10; capacity is `c/11` of the total item weight.
    pub capacity_class: u32,
    pub coord_range: f64,
    pub seed: u64,
    #[serde(default)]
    pub edge_weight_kind: EdgeWeightKind,
}

impl GeneratorParams {
    pub const ITEM_FACTORS: [usize; 4] = [1, 3, 5, 10];

    pub fn new(
        n_cities: usize,
        item_factor: usize,
        kp_type: KpType,
        capacity_class: u32,
        seed: u64,
    ) -> Self {
        GeneratorParams {
            n_cities,
            item_factor,
            kp_type,
            capacity_class,
            coord_range: 1000.0,
            seed,
            edge_weight_kind: EdgeWeightKind::default(),
        }
    }

    pub fn validate(&self) -> Result<(), InstanceError> {
        let bad = |m: String| Err(InstanceError::InvalidParams(m));
        if self.n_cities < 2 {
            return bad(format!(
                "n_cities must be at least 2, got {}",
                self.n_cities
            ));
        }
        if !Self::ITEM_FACTORS.contains(&self.item_factor) {
            return bad(format!(
                "item factor must be one of 1, 3, 5, 10, got {}",
                self.item_factor
            ));
        }
        if !(1..=10).contains(&self.capacity_class) {
            return bad(format!(
                "capacity class must be in 1..=10, got {}",
                self.capacity_class
            ));
        }
        if !(self.coord_range > 0.0) || !self.coord_range.is_finite() {
            return bad(format!(
                "coordinate range must be positive, got {}",
                self.coord_range
            ));
        }
        Ok(())
    }

    pub fn instance_name(&self) -> String {
        format!(
            "gen-n{}-f{}-{}-c{}-s{}",
            self.n_cities,
            self.item_factor,
            self.kp_type.short_name(),
            self.capacity_class,
            self.seed
        )
    }
}

/// A generated instance together with the solution whose objective is zero
/// by construction of the renting rate.
#[derive(Debug, Clone)]
pub struct GeneratedInstance {
    pub instance: TtpInstance,
    pub reference_tour: Tour,
    pub reference_plan: PackingPlan,
}

pub fn generate_instance(params: &GeneratorParams) -> Result<TtpInstance, InstanceError> {
    generate_with_reference(params).map(|g| g.instance)
}

pub fn generate_with_reference(
    params: &GeneratorParams,
) -> Result<GeneratedInstance, InstanceError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.n_cities;
    let coords: Vec<Point> = (0..n)
        .map(|_| {
            let x = rng.random_range(0.0..=params.coord_range);
            let y = rng.random_range(0.0..=params.coord_range);
            Point::new(x, y)
        })
        .collect();

    // Item ids run over cities 2..n first, then repeat per item factor, as in
    // the public benchmark files.
    let mut items = Vec::with_capacity((n - 1) * params.item_factor);
    for _ in 0..params.item_factor {
        for city in 1..n {
            let (profit, weight) = sample_item(&mut rng, params.kp_type);
            items.push(Item {
                id: items.len() + 1,
                city,
                profit,
                weight,
            });
        }
    }
    let total_weight: f64 = items.iter().map(|it| it.weight).sum();
    let capacity = f64::from(params.capacity_class) * total_weight / 11.0;

    let mut instance = TtpInstance {
        name: params.instance_name(),
        coords,
        edge_weight_kind: params.edge_weight_kind,
        items,
        capacity,
        min_speed: 0.1,
        max_speed: 1.0,
        renting_rate: 0.0,
        kp_type: params.kp_type,
    };

    let tour = tour_heuristics::nearest_neighbor_tour(&instance, params.seed);
    let tour = tour_heuristics::two_opt(&instance, &tour, Budget::Unlimited);
    let plan = greedy_ratio_plan(&instance);
    let profit = evaluation::profit(&instance, &plan);
    let time = evaluation::travel_time(&instance, &tour, &plan)
        .map_err(|e| InstanceError::InvariantViolation(format!("reference solution: {e}")))?;
    instance.renting_rate = profit / time;
    instance.check_invariants()?;
    Ok(GeneratedInstance {
        instance,
        reference_tour: tour,
        reference_plan: plan,
    })
}

fn sample_item(rng: &mut ChaCha8Rng, kp: KpType) -> (f64, f64) {
    match kp {
        KpType::Uncorrelated => {
            let w = rng.random_range(1..=1000u32);
            let p = rng.random_range(1..=1000u32);
            (f64::from(p), f64::from(w))
        }
        KpType::UncorrelatedSimilarWeights => {
            let w = rng.random_range(1000..=1010u32);
            let p = rng.random_range(1..=1000u32);
            (f64::from(p), f64::from(w))
        }
        KpType::BoundedStronglyCorrelated => {
            let w = rng.random_range(1..=1000u32);
            (f64::from(w + 100), f64::from(w))
        }
    }
}

/// Capacity-feasible greedy packing by profit/weight ratio, ties by lowest index.
pub fn greedy_ratio_plan(inst: &TtpInstance) -> PackingPlan {
    let mut order: Vec<usize> = (0..inst.num_items()).collect();
    order.sort_by(|&a, &b| {
        let ra = inst.items[a].profit / inst.items[a].weight;
        let rb = inst.items[b].profit / inst.items[b].weight;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut plan = PackingPlan::empty(inst.num_items());
    let mut load = 0.0;
    for k in order {
        let w = inst.items[k].weight;
        if load + w <= inst.capacity {
            load += w;
            plan.picked[k] = true;
        }
    }
    plan
}

/// The four-city, six-item example instance with `W = 3`, `R = 1`,
/// `v_min = 0.1` and `v_max = 1`. Under CEIL_2D the tour 1-2-4-3 has legs
/// 5, 5, 5 and a closing leg of 6; picking items 4 and 5 scores exactly 50.
pub fn four_city_example() -> TtpInstance {
    let coords = vec![
        Point::new(0.0, 0.0),
        Point::new(3.0, 4.0),
        Point::new(6.0, 0.0),
        Point::new(8.0, 4.0),
    ];
    let raw = [
        (20.0, 2.0, 1),
        (30.0, 3.0, 1),
        (100.0, 3.0, 2),
        (40.0, 1.0, 2),
        (40.0, 1.0, 2),
        (20.0, 2.0, 3),
    ];
    let items = raw
        .iter()
        .enumerate()
        .map(|(k, &(profit, weight, city))| Item {
            id: k + 1,
            city,
            profit,
            weight,
        })
        .collect();
    TtpInstance {
        name: "worked-example".into(),
        coords,
        edge_weight_kind: EdgeWeightKind::CeilEuclidean2D,
        items,
        capacity: 3.0,
        min_speed: 0.1,
        max_speed: 1.0,
        renting_rate: 1.0,
        kp_type: KpType::Uncorrelated,
    }
}
