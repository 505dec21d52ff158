fn main() {
    std::process::exit(swarm_attrition::harness::cli_main(std::env::args_os()));
}
