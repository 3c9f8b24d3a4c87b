fn main() {
    print!("{}", mdcn::perceptual::band_tables_text());
}
