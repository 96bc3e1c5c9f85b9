/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

// Emulated task body launched by the real backend.
//
//   pilot-payload sleep <seconds>
//   pilot-payload burn <flops>
//   pilot-payload exit <code>

#include "pilot/emulator.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <thread>

int main(int argc, char** argv)
{
    if (argc != 3) {
        std::fprintf(stderr, "usage: %s sleep <seconds> | burn <flops> | exit <code>\n", argv[0]);
        return 2;
    }
    const std::string mode = argv[1];
    try {
        if (mode == "sleep") {
            std::this_thread::sleep_for(std::chrono::duration<double>(std::stod(argv[2])));
            return 0;
        }
        if (mode == "burn") {
            pilot::burn_flops(std::stoull(argv[2]));
            return 0;
        }
        if (mode == "exit")
            return std::atoi(argv[2]);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "pilot-payload: %s\n", e.what());
        return 2;
    }
    std::fprintf(stderr, "pilot-payload: unknown mode '%s'\n", mode.c_str());
    return 2;
}
