fn main() {
    std::process::exit(lidar_deskew::cli::run(std::env::args_os()));
}
