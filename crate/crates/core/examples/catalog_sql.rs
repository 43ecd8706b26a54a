//! Queries the bundled game catalog through the read-only SQL guard.
//!
//! ```text
//! cargo run --example catalog_sql
//! ```

use recagent::catalog::games_toy;

fn main() {
    let catalog = games_toy();
    println!("{}\n", catalog.table_info());

    let table = catalog
        .execute_sql("SELECT title, price FROM items WHERE tags LIKE '%RPG%' ORDER BY price")
        .expect("query runs");
    for i in 0..table.rows.len() {
        let row: Vec<String> = table.record(i).iter().map(|(col, v)| format!("{col}={v:?}")).collect();
        println!("{}", row.join("  "));
    }

    // writes never reach the database
    for q in ["DELETE FROM items", "SELECT * FROM items; DROP TABLE items"] {
        println!("{q:?} -> {}", catalog.execute_sql(q).unwrap_err());
    }
}
