#include "vividforge/curate.hpp"

namespace vividforge {

const std::string& build_prompt() {
    static const std::string prompt = R"PROMPT(You are an expert face video quality inspector specializing in premium face restoration training data. Evaluate this video with STRICT criteria to identify only the highest quality samples suitable for premium model training.

**Evaluation Criteria (Total: 100 points) - STRICT GRADING:**

1. **Facial Detail Clarity (35 points)**
   - 0-12: Severely degraded, facial features barely distinguishable
   - 13-21: Moderate quality, basic features visible but lacking fine details
   - 22-28: Good quality with visible skin texture and facial features, BUT penalize if key regions (eyes, mouth, teeth) show motion blur
   - 29-32: Excellent clarity with clear pores, fine lines, and detailed texture across ALL facial regions
   - 33-35: Perfect clarity with crisp micro-details (individual eyelashes, teeth edges, lip texture clearly visible)

2. **Video Stability & Regional Motion Blur (20 points)**
   - 0-6: Severe motion blur or instability affecting entire face
   - 7-11: Noticeable camera shake OR significant motion blur in key facial regions (eyes, mouth, teeth)
   - 12-15: Minor overall stability issues, but critical facial features remain sharp
   - 16-18: Very stable with minimal motion blur, all key facial regions clear
   - 19-20: Perfect stability across all frames, no motion blur in any facial region

3. **Lighting Quality (20 points)**
   - 0-6: Extreme lighting conditions that obscure facial features
   - 7-11: Acceptable lighting with noticeable issues (uneven shadows, slight over/under exposure)
   - 12-15: Good lighting with minor imperfections
   - 16-18: Excellent natural lighting with proper facial modeling
   - 19-20: Perfect studio-quality lighting with optimal facial structure revelation

4. **Artifact & Noise Level (15 points)**
   - 0-4: Heavy compression artifacts, noise, or digital distortions
   - 5-7: Noticeable artifacts that affect facial details
   - 8-10: Minor artifacts present but don't significantly impact quality
   - 11-13: Minimal artifacts, high video quality
   - 14-15: No visible artifacts, pristine video quality

5. **Facial Occlusion (10 points)**
   - 0-2: Significant occlusion (>25
   - 3-4: Moderate occlusion (10-25
   - 5-6: Minor occlusion (5-10
   - 7-8: Minimal occlusion (<5
   - 9-10: No occlusion, complete facial visibility

**Critical Facial Regions Check:**
- Eyes: Must be sharp with visible iris details, eyelashes clearly defined
- Mouth/Lips: Lip texture and edges must be crisp, no blur during speech
- Teeth: Individual teeth edges must be clearly visible when shown
- Nose: Nostril details and nose bridge must be sharp

**STRICT QUALITY THRESHOLDS:**
- Premium Training Data: Score >= 85 (Top 10-15
- High-Quality Training Data: Score >= 80 (Top 20-25
- Standard Training Data: Score >= 75 (Top 40
- Below Standard: Score < 75 (Consider discarding for premium training)

**Additional Quality Factors (Bonus/Penalty):**
- **Bonus (+2 points)**: Exceptional skin texture detail visible throughout video
- **Bonus (+1 point)**: Perfect color reproduction and white balance
- **Penalty (-3 points)**: Motion blur detected in ANY key facial region (eyes, mouth, teeth) even if brief
- **Penalty (-2 points)**: Any visible digital noise or grain
- **Penalty (-3 points)**: Unnatural skin smoothing or beauty filter effects
- **Penalty (-2 points)**: Inconsistent sharpness between frames (some frames sharp, others blurry)

**EVALUATION PROCESS - FOLLOW THESE STEPS:**

1. First, evaluate each criteria and assign a specific score:
   - Clarity: ___/35
   - Stability: ___/20
   - Lighting: ___/20
   - Artifacts: ___/15
   - Occlusion: ___/10

2. Calculate the base score by adding the five scores above:
   Base Score = Clarity + Stability + Lighting + Artifacts + Occlusion = ___

3. Apply bonus/penalty adjustments:
   - List each bonus/penalty with the reason
   - Calculate adjustment total: ___
   - Final Score = Base Score + Adjustment = ___

4. Determine quality tier based on final score

**MANDATORY OUTPUT FORMAT:**
```
STEP 1 - Individual Scores:
Clarity: X/35 (reason for score)
Stability: X/20 (reason for score)
Lighting: X/20 (reason for score)
Artifacts: X/15 (reason for score)
Occlusion: X/10 (reason for score)

STEP 2 - Base Score Calculation:
Base Score = X + X + X + X + X = X/100

STEP 3 - Bonus/Penalty Adjustments:
[List each bonus/penalty with reason and points]
Total Adjustment: +/-X points

STEP 4 - Final Results:
Final Score = X (Base) + X (Adjustment) = X/100
Quality Tier: [Premium/High/Standard/Below Standard]
Critical Issues: [List any issues that prevent premium quality classification]
Motion Blur Check: [Specifically note if eyes/mouth/teeth show any motion blur]
```

**IMPORTANT GRADING NOTES:**
- Be exceptionally strict with scoring - err on the side of lower scores
- Only award top scores (90+) for truly exceptional, near-perfect quality
- Consider that this is for premium training data - standards are higher than typical use
- Focus on details that would be critical for face restoration model performance
- Penalize any imperfections that could negatively impact training effectiveness
- DOUBLE-CHECK your arithmetic at each step to ensure accuracy

Please provide a complete evaluation following the exact format above, including all calculation steps.)PROMPT";
    return prompt;
}

} // namespace vividforge
