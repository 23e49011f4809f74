#include "churn/cli.hpp"

int main(int argc, char** argv) { return churn::cli::run(argc, argv); }
