//! Reads IDX image/label files. With no arguments a tiny file pair is
//! written to a temporary directory first.
//!
//! cargo run --example idx_loading -- [images labels subsample]

use std::path::PathBuf;

use cat_uda::datasets::{encode_idx_images, encode_idx_labels, load_idx};

fn main() -> cat_uda::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (images, labels, n) = if let [i, l, n] = &args[..] {
        (PathBuf::from(i), PathBuf::from(l), n.parse().expect("subsample count"))
    } else {
        let dir = std::env::temp_dir().join("catuda_idx_example");
        std::fs::create_dir_all(&dir)?;
        let (i, l) = (dir.join("images"), dir.join("labels"));
        std::fs::write(
            &i,
            encode_idx_images(3, 2, 2, &[0, 255, 128, 64, 10, 20, 30, 40, 255, 255, 0, 0]),
        )?;
        std::fs::write(&l, encode_idx_labels(&[7, 1, 4]))?;
        (i, l, 3)
    };
    let (x, y) = load_idx(&images, &labels, n, 0)?;
    println!("{} images of {} pixels", x.rows(), x.cols());
    for (row, label) in x.iter_rows().zip(&y).take(5) {
        println!("label {label}: first pixels {:.3?}", &row[..row.len().min(4)]);
    }
    Ok(())
}
