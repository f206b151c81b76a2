#!/usr/bin/env python3
"""Prepends the Apache-2.0 header to project sources that lack it."""

import pathlib
import sys

HEADER = """\
{c} Copyright 2026 The FlowCon Authors.
{c}
{c} Licensed under the Apache License, Version 2.0 (the "License");
{c} you may not use this file except in compliance with the License.
{c} You may obtain a copy of the License at
{c}
{c}     http://www.apache.org/licenses/LICENSE-2.0
{c}
{c} Unless required by applicable law or agreed to in writing, software
{c} distributed under the License is distributed on an "AS IS" BASIS,
{c} WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
{c} See the License for the specific language governing permissions and
{c} limitations under the License.
"""

DIRS = ["include", "src", "tests", "tools", "bench"]
COMMENT = {".hpp": "//", ".cpp": "//", ".py": "#", ".txt": "#"}


def main(root):
    root = pathlib.Path(root)
    paths = [root / "CMakeLists.txt"]
    for d in DIRS:
        paths += sorted(p for p in (root / d).rglob("*") if p.is_file())
    for path in paths:
        c = COMMENT.get(path.suffix)
        if c is None or path.suffix == ".txt" and path.name != "CMakeLists.txt":
            continue
        text = path.read_text()
        if "Copyright 2026 The FlowCon Authors." in text:
            continue
        header = HEADER.format(c=c)
        if text.startswith("#!"):
            shebang, _, rest = text.partition("\n")
            text = shebang + "\n" + header + "\n" + rest
        else:
            text = header + "\n" + text
        path.write_text(text)
        print("added", path.relative_to(root))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else pathlib.Path(__file__).resolve().parent.parent)
