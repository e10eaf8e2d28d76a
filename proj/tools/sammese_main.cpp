// SPDX-License-Identifier: Apache-2.0
#include "sammese/cli.hpp"

int main(int argc, char** argv) { return sammese::run_cli(argc, argv); }
