# tinyst - desk-scale end-to-end speech translation toolkit.
# Copyright (C) 2026 tinyst contributors. All rights reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#   http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Python surface of the tinyst core library.

Everything here is a thin re-export of the compiled ``_core`` module:
tensors bridge to numpy through the buffer protocol, and the training,
distillation, decoding and scoring entry points mirror the C++ API.
"""

try:
    from tinyst._core import *  # noqa: F401,F403  (installed package layout)
    from tinyst import _core
except ImportError:  # build-tree layout: _core.so sits on PYTHONPATH
    import _core
    from _core import *  # noqa: F401,F403

__version__ = "0.1.0"
__all__ = [name for name in dir(_core) if not name.startswith("_")]
