// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "rflpa/cli.h"

int main(int argc, char** argv) { return rflpa::cli::run(argc, argv, std::cout, std::cerr); }
