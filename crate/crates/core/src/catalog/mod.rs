//! Item catalog: CSV ingestion, the read-only `items` SQL table exposed to the
//! LLM, and the leave-one-out interaction split.

pub mod guard;
mod split;

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::sync::Mutex;

use chrono::NaiveDate;
use rusqlite::{params, Connection};
use serde::{Deserialize, Serialize};

pub use guard::GuardViolation;
pub use split::{split_leave_one_out, Split};

/// Dense item index, `0..item_count` after ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub u32);

impl ItemId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: ItemId,
    /// Id as it appeared in the source file.
    pub original_id: i64,
    pub title: String,
    pub tags: Vec<String>,
    pub price: f64,
    pub release_date: NaiveDate,
    pub description: String,
    /// Number of training-split interactions.
    pub popularity: u32,
}

/// Item fields as supplied by a source, before id remapping.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemRecord {
    pub original_id: i64,
    pub title: String,
    pub tags: Vec<String>,
    pub price: f64,
    pub release_date: NaiveDate,
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interaction {
    pub user_id: i64,
    pub item_id: ItemId,
    pub timestamp: i64,
}

/// An interaction that still refers to the source item id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawInteraction {
    pub user_id: i64,
    pub item_id: i64,
    pub timestamp: i64,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Malformed { file: String, line: u64, message: String },
    #[error("duplicate title {title:?} for item ids {first} and {second}")]
    DuplicateTitle { title: String, first: i64, second: i64 },
    #[error("duplicate item id {0}")]
    DuplicateId(i64),
    #[error("{file}:{line}: interaction references unknown item id {item_id}")]
    UnknownItem { file: String, line: u64, item_id: i64 },
    #[error("sql store: {0}")]
    Store(#[from] rusqlite::Error),
}

/// Errors from [`Catalog::execute_sql`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SqlError {
    /// The read-only guard refused the query.
    #[error("policy violation: {0}")]
    Policy(String),
    /// The engine rejected the query.
    #[error("SQL error: {0}")]
    Syntax(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SqlValue {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
}

impl fmt::Display for SqlValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SqlValue::Null => f.write_str("NULL"),
            SqlValue::Integer(v) => write!(f, "{v}"),
            SqlValue::Real(v) => write!(f, "{v}"),
            SqlValue::Text(v) => f.write_str(v),
        }
    }
}

/// Query result with column order preserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<SqlValue>>,
}

impl ResultTable {
    /// Row `idx` as `(column, value)` pairs in column order.
    pub fn record(&self, idx: usize) -> Vec<(&str, &SqlValue)> {
        self.columns
            .iter()
            .map(String::as_str)
            .zip(self.rows[idx].iter())
            .collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.eq_ignore_ascii_case(name))
    }
}

const ITEMS_DDL: &str = "CREATE TABLE items (
    id INTEGER PRIMARY KEY,
    title TEXT NOT NULL,
    tags TEXT NOT NULL,
    price REAL NOT NULL,
    release_date TEXT NOT NULL,
    description TEXT NOT NULL,
    popularity INTEGER NOT NULL
)";

const ITEM_TAGS_DDL: &str = "CREATE TABLE item_tags (
    item_id INTEGER NOT NULL REFERENCES items(id),
    tag TEXT NOT NULL
)";

/// Read-only SQLite view of the item table.
struct SqlStore {
    conn: Mutex<Connection>,
}

impl SqlStore {
    fn build(items: &[Item]) -> rusqlite::Result<Self> {
        let mut conn = Connection::open_in_memory()?;
        conn.execute_batch(&format!("{ITEMS_DDL}; {ITEM_TAGS_DDL};"))?;
        let tx = conn.transaction()?;
        {
            let mut insert_item = tx.prepare(
                "INSERT INTO items (id, title, tags, price, release_date, description, popularity)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
            )?;
            let mut insert_tag = tx.prepare("INSERT INTO item_tags (item_id, tag) VALUES (?1, ?2)")?;
            for item in items {
                insert_item.execute(params![
                    item.id.0,
                    item.title,
                    item.tags.join("|"),
                    item.price,
                    item.release_date.format("%Y-%m-%d").to_string(),
                    item.description,
                    item.popularity,
                ])?;
                for tag in &item.tags {
                    insert_tag.execute(params![item.id.0, tag])?;
                }
            }
        }
        tx.commit()?;
        conn.pragma_update(None, "query_only", true)?;
        Ok(SqlStore { conn: Mutex::new(conn) })
    }

    fn query(&self, sql: &str) -> Result<ResultTable, SqlError> {
        let conn = self.conn.lock().unwrap_or_else(|e| e.into_inner());
        let mut stmt = conn.prepare(sql).map_err(|e| SqlError::Syntax(e.to_string()))?;
        if !stmt.readonly() {
            return Err(SqlError::Policy("statement is not read-only".into()));
        }
        let columns: Vec<String> = stmt.column_names().iter().map(|c| c.to_string()).collect();
        let width = columns.len();
        let mut rows = Vec::new();
        let mut cursor = stmt.query([]).map_err(|e| SqlError::Syntax(e.to_string()))?;
        while let Some(row) = cursor.next().map_err(|e| SqlError::Syntax(e.to_string()))? {
            let mut values = Vec::with_capacity(width);
            for i in 0..width {
                use rusqlite::types::ValueRef;
                let v = match row.get_ref(i).map_err(|e| SqlError::Syntax(e.to_string()))? {
                    ValueRef::Null => SqlValue::Null,
                    ValueRef::Integer(v) => SqlValue::Integer(v),
                    ValueRef::Real(v) => SqlValue::Real(v),
                    ValueRef::Text(t) => SqlValue::Text(String::from_utf8_lossy(t).into_owned()),
                    ValueRef::Blob(b) => SqlValue::Text(format!("<{} bytes>", b.len())),
                };
                values.push(v);
            }
            rows.push(values);
        }
        Ok(ResultTable { columns, rows })
    }
}

type RecordIndex = (HashMap<i64, ItemId>, HashMap<String, ItemId>);

/// Sorts records by original id and assigns dense ids, rejecting duplicate
/// ids and duplicate (case-insensitive, trimmed) titles.
fn index_records(records: &mut [ItemRecord]) -> Result<RecordIndex, IngestError> {
    records.sort_by_key(|r| r.original_id);
    let mut by_original = HashMap::with_capacity(records.len());
    let mut title_index: HashMap<String, ItemId> = HashMap::with_capacity(records.len());
    for (idx, rec) in records.iter().enumerate() {
        let id = ItemId(idx as u32);
        if by_original.insert(rec.original_id, id).is_some() {
            return Err(IngestError::DuplicateId(rec.original_id));
        }
        if let Some(prev) = title_index.insert(title_key(&rec.title), id) {
            return Err(IngestError::DuplicateTitle {
                title: rec.title.clone(),
                first: records[prev.index()].original_id,
                second: rec.original_id,
            });
        }
    }
    Ok((by_original, title_index))
}

/// Immutable item database shared by every session.
pub struct Catalog {
    items: Vec<Item>,
    title_index: HashMap<String, ItemId>,
    interactions: Vec<Interaction>,
    split: Split,
    sql: SqlStore,
}

impl fmt::Debug for Catalog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Catalog")
            .field("items", &self.items.len())
            .field("interactions", &self.interactions.len())
            .finish()
    }
}

pub(crate) fn title_key(title: &str) -> String {
    title.trim().to_lowercase()
}

impl Catalog {
    /// Builds a catalog from in-memory records. Items are remapped to dense
    /// ids in ascending order of their original ids.
    pub fn from_records(
        mut records: Vec<ItemRecord>,
        raw: Vec<RawInteraction>,
    ) -> Result<Catalog, IngestError> {
        let (by_original, title_index) = index_records(&mut records)?;
        let interactions = raw
            .iter()
            .enumerate()
            .map(|(idx, r)| {
                by_original
                    .get(&r.item_id)
                    .map(|&item_id| Interaction { user_id: r.user_id, item_id, timestamp: r.timestamp })
                    .ok_or(IngestError::UnknownItem {
                        file: "<interactions>".into(),
                        line: idx as u64 + 1,
                        item_id: r.item_id,
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::assemble(records, title_index, interactions)
    }

    fn assemble(
        records: Vec<ItemRecord>,
        title_index: HashMap<String, ItemId>,
        interactions: Vec<Interaction>,
    ) -> Result<Catalog, IngestError> {
        let split = split_leave_one_out(&interactions);
        let mut popularity = vec![0u32; records.len()];
        for it in &split.train {
            popularity[it.item_id.index()] += 1;
        }
        let items: Vec<Item> = records
            .into_iter()
            .enumerate()
            .map(|(idx, r)| Item {
                id: ItemId(idx as u32),
                original_id: r.original_id,
                title: r.title,
                tags: r.tags,
                price: r.price,
                release_date: r.release_date,
                description: r.description,
                popularity: popularity[idx],
            })
            .collect();
        let sql = SqlStore::build(&items)?;
        Ok(Catalog { items, title_index, interactions, split, sql })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn item(&self, id: ItemId) -> Option<&Item> {
        self.items.get(id.index())
    }

    pub fn title(&self, id: ItemId) -> &str {
        &self.items[id.index()].title
    }

    pub fn popularity(&self, id: ItemId) -> u32 {
        self.items[id.index()].popularity
    }

    /// Exact case-insensitive title lookup (surrounding whitespace ignored).
    pub fn resolve_title(&self, title: &str) -> Option<ItemId> {
        self.title_index.get(&title_key(title)).copied()
    }

    pub fn all_ids(&self) -> Vec<ItemId> {
        (0..self.items.len() as u32).map(ItemId).collect()
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    /// Runs a guarded read-only query against the `items` table.
    pub fn execute_sql(&self, query: &str) -> Result<ResultTable, SqlError> {
        let statement = guard::check_read_only(query).map_err(|v| SqlError::Policy(v.to_string()))?;
        self.sql.query(statement)
    }

    /// Schema description injected into prompts as `{table_info}`.
    pub fn table_info(&self) -> String {
        let mut out = String::from(ITEMS_DDL);
        out.push_str("\n/*\nColumn notes: `tags` is a '|'-separated list of tags (match it with LIKE); ");
        out.push_str("`release_date` is text formatted YYYY-MM-DD; `price` is in currency units; ");
        out.push_str("`popularity` is the number of recorded user interactions.\n");
        out.push_str(&format!("The table holds {} rows.\n*/", self.items.len()));
        out
    }
}

const GAMES_TOY_ITEMS: &str = include_str!("../../data/games-toy/items.csv");
const GAMES_TOY_INTERACTIONS: &str = include_str!("../../data/games-toy/interactions.csv");

/// The bundled 20-game demo catalog.
pub fn games_toy() -> Catalog {
    ingest_readers(
        GAMES_TOY_ITEMS.as_bytes(),
        "games-toy/items.csv",
        GAMES_TOY_INTERACTIONS.as_bytes(),
        "games-toy/interactions.csv",
    )
    .expect("bundled catalog is well-formed")
}

#[derive(Debug, Deserialize)]
struct ItemRow {
    id: i64,
    title: String,
    tags: String,
    price: f64,
    release_date: String,
    description: String,
}

#[derive(Debug, Deserialize)]
struct InteractionRow {
    user_id: i64,
    item_id: i64,
    timestamp: i64,
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io { path: path.display().to_string(), source })
}

/// Reads items and interactions CSV files into a [`Catalog`].
pub fn ingest_catalog(items_path: &Path, interactions_path: &Path) -> Result<Catalog, IngestError> {
    ingest_readers(
        open(items_path)?,
        &items_path.display().to_string(),
        open(interactions_path)?,
        &interactions_path.display().to_string(),
    )
}

/// Same as [`ingest_catalog`] over arbitrary readers; `*_name` labels errors.
pub fn ingest_readers(
    items: impl Read,
    items_name: &str,
    interactions: impl Read,
    interactions_name: &str,
) -> Result<Catalog, IngestError> {
    let mut sorted = read_items(items, items_name)?;
    let (by_original, title_index) = index_records(&mut sorted)?;

    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(interactions);
    let mut list = Vec::new();
    for row in reader.deserialize::<InteractionRow>() {
        let row = row.map_err(|e| malformed(interactions_name, &e))?;
        let item_id = *by_original.get(&row.item_id).ok_or_else(|| IngestError::UnknownItem {
            file: interactions_name.to_string(),
            line: list.len() as u64 + 2,
            item_id: row.item_id,
        })?;
        list.push(Interaction { user_id: row.user_id, item_id, timestamp: row.timestamp });
    }
    Catalog::assemble(sorted, title_index, list)
}

fn malformed(file: &str, e: &csv::Error) -> IngestError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    let message = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        _ => e.to_string(),
    };
    IngestError::Malformed { file: file.to_string(), line, message }
}

fn read_items(input: impl Read, name: &str) -> Result<Vec<ItemRecord>, IngestError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    let mut raw = csv::StringRecord::new();
    let headers = reader.headers().map_err(|e| malformed(name, &e))?.clone();
    loop {
        match reader.read_record(&mut raw) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(malformed(name, &e)),
        }
        let line = raw.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| IngestError::Malformed { file: name.to_string(), line, message };
        let row: ItemRow = raw.deserialize(Some(&headers)).map_err(|e| bad(e.to_string()))?;
        if row.title.is_empty() {
            return Err(bad("empty title".into()));
        }
        if !(row.price.is_finite() && row.price >= 0.0) {
            return Err(bad(format!("price must be a non-negative number, got {}", row.price)));
        }
        let release_date = NaiveDate::parse_from_str(&row.release_date, "%Y-%m-%d")
            .map_err(|e| bad(format!("release_date {:?}: {e}", row.release_date)))?;
        let tags = row
            .tags
            .split('|')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect();
        out.push(ItemRecord {
            original_id: row.id,
            title: row.title,
            tags,
            price: row.price,
            release_date,
            description: row.description,
        });
    }
    Ok(out)
}
