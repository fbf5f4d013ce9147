#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) {
  carp::cli::RunConfig config;
  if (auto status = carp::cli::parse_args(argc, argv, config, std::cout, std::cerr)) return *status;
  return carp::cli::run(config, std::cout, std::cerr);
}
