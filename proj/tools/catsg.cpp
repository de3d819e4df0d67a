// SPDX-License-Identifier: Apache-2.0
#include "catsg/cli.hpp"

int main(int argc, char** argv) { return catsg::cli::run(argc, argv); }
