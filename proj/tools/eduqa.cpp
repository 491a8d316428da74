// Copyright (C) 2026 The eduqa Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <iostream>

#include "eduqa/cli/commands.hpp"
#include "eduqa/data/live_client.hpp"

int main(int argc, char** argv) {
    eduqa::cli::Environment env;
    env.live_client = [](const std::string& key) -> std::unique_ptr<eduqa::data::CompletionClient> {
        eduqa::data::LiveClientOptions o;
        o.api_key = key;
        if (const char* url = std::getenv("EDUQA_API_BASE")) o.base_url = url;
        if (const char* model = std::getenv("EDUQA_MODEL")) o.model = model;
        return std::make_unique<eduqa::data::LiveClient>(o);
    };
    return eduqa::cli::run(argc, argv, std::cout, std::cerr, env);
}
