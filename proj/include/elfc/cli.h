/*
 * Copyright 2026 The elfc Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Config files, run manifests, controller artifacts and the command-line
// driver behind tools/elfc.

#ifndef ELFC_CLI_H_
#define ELFC_CLI_H_

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "elfc/closed_loop_sim.h"

namespace elfc {

inline constexpr const char* kArtifactVersion = "elfc-1.0";

// Flat "key = value" text; see docs/config.md for the grammar and keys.
// Errors carry "source:line:".
SimConfig ParseConfig(const std::string& text,
                      const std::string& source = "<config>");
SimConfig LoadConfig(const std::string& path);
// Every field that affects a run, one key per line, in a fixed order. The
// output parses back to the same config.
std::string CanonicalConfig(const SimConfig& c);

struct RunManifest {
  std::string command;
  std::string config_digest;  // SHA-256 of the canonical config
  uint64_t seed = 0;
  std::string plant_profile;
  std::string crypto_profile;
  std::string artifact_version = kArtifactVersion;
  std::vector<std::string> outputs;

  std::string ToJson() const;
};
RunManifest MakeManifest(const std::string& command, const SimConfig& c,
                         const std::vector<std::string>& outputs);

// Encrypted controller in the wire format, tagged with dt and the profile.
struct ControllerArtifact {
  EncryptedController controller;
  double dt = 0.0;
  std::string profile;
  LweParams online;
  ScaleParams scale;
};
std::vector<uint8_t> ExportController(const EncryptedController& ec,
                                      const Profile& profile, double dt);
ControllerArtifact ImportController(const std::vector<uint8_t>& bytes);
// Decrypted dump for debugging; needs both ISO secret keys.
std::string RevealController(const EncryptedController& ec,
                             const SecretKey& synthesis,
                             const SecretKey& online);

// Exit codes: 0 success, 1 completed but a check failed (degraded tracking,
// failed comparison), then the error categories 2-5.
int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err);

}  // namespace elfc

#endif  // ELFC_CLI_H_
