#include "tcbc/app.hpp"

int main(int argc, char** argv) { return tcbc::cli::run_cli(argc, argv); }
