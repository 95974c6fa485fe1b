fn main() {
    veloprefs::pipeline::cli_main();
}
