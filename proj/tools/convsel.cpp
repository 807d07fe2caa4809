// Copyright 2026 The convsel Authors
// SPDX-License-Identifier: Apache-2.0

#include "convsel/cli.hpp"

int main(int argc, char **argv) {
    return convsel::cli::run(argc, argv);
}
