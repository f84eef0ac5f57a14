// Copyright 2026 The advkd Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Prompt template bodies. Kept byte-identical to tests/data/templates/*.txt;
// edit both together.

#include <string_view>

namespace advkd::prompts::text {

inline constexpr std::string_view kSubtopics = R"tmpl(As a Python textbook author, create {n} distinct subtopics for the main topic '{topic}'.

Requirements:
- Each subtopic should be broad enough to generate multiple exercise types (theory, practice, debugging).
- Include both fundamental and advanced concepts.
- Ensure topics build on each other in a logical learning progression.
- Mix conceptual and practical application areas.
- Avoid overlapping subtopics.

Format your response as a Python list of strings, like this:
['Basic String Operations', 'String Formatting Methods', 'Regular Expressions']

Return only the Python list with no additional text or explanation.)tmpl";

inline constexpr std::string_view kInitialCodeCompletion = R"tmpl(Create {n} unique and challenging Python code completion exercises on the topic of "{topic}".
Each exercise should be framed in the context of a {profession}'s work to make it more engaging.

Structure each exercise as follows:

```
def function_name(parameters):
    """
    Description of the task or problem to solve, providing all necessary context.
    """
    # Solution code starts here (in Python)
```

Guidelines:
- Avoid using classes
- Make exercises challenging)tmpl";

inline constexpr std::string_view kInitialNaturalLanguage = R"tmpl(Create {n} unique and challenging Python programming exercises on the topic of "{topic}",
framed within the context of a {profession}'s daily work scenarios.

Structure each exercise as follows:

[PROBLEM]
Problem: [Natural language description that presents the programming challenge in a {profession}-related scenario]

Input: [Clearly specify the input format using domain-specific examples]

Output: [Clearly specify the expected output format]

Examples:
[Provide 2-3 test cases with profession-relevant data and explanations]

Constraints:
[State any constraints or special considerations]
[PROBLEM]

Example scenario structure:
- For a chef: "Given a list of recipe preparation times, find the optimal cooking schedule..."
- For an architect: "Given dimensions of building materials, calculate the most efficient arrangement..."

Guidelines:
- Use profession-specific terminology and realistic scenarios
- Make the problem mathematically sound while maintaining professional context
- Include domain-relevant example data in test cases
- Do NOT provide the solution, only the problem description
- Make SURE to write the problem between the [PROBLEM] tokens)tmpl";

inline constexpr std::string_view kAdvIncremental = R"tmpl(Based on the reference exercise '{reference}', generate {n} new coding exercises that introduce additional edge cases and increased complexity.

Requirements:
- Build upon the original task, adding nuanced complexity.
- Avoid using classes, but require complex logic and multiple edge cases.
- Provide a solution following the exercise.

Format:
```
def function_name(parameters):
    \"\"\"Exercise description with additional complexity.\"\"\"
    # Solution code here
```)tmpl";

inline constexpr std::string_view kAdvOpposite = R"tmpl(    
Create {n} adversarial coding exercises for the topic related to '{reference}' that challenge conventional assumptions made in the original exercise.

Requirements:
- Shift expected assumptions, requiring the model to adapt to unexpected scenarios.
- Keep exercises challenging and avoid using classes.
- Provide solutions immediately after each exercise.

Format:
```
def function_name(parameters):
    """Exercise with altered assumptions."""
    # Solution code here
```)tmpl";

inline constexpr std::string_view kAdvDeceptive = R"tmpl(Generate {n} coding exercises inspired by '{reference}' that appear simple but involve hidden complexities.

Requirements:
- Exercises should look straightforward but require complex solutions.
- Avoid classes and focus on deceptive problem setups.
- Solutions should immediately follow the exercise.

Format:
```
def function_name(parameters):
    """Exercise with hidden complexities."" 
    # Solution code here
```    )tmpl";

}  // namespace advkd::prompts::text
