pub fn cli_main() {}
