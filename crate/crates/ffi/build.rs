use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    let header = crate_dir.join("include").join("twfr_gmm.h");

    let mut config = cbindgen::Config::default();
    config.enumeration.prefix_with_name = true;

    cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .with_language(cbindgen::Language::C)
        .with_include_guard("TWFR_GMM_H")
        .with_cpp_compat(true)
        .generate()
        .expect("cbindgen header generation failed")
        .write_to_file(header);

    println!("cargo:rerun-if-changed=src/lib.rs");
}
