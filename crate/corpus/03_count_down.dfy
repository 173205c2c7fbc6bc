method CountDown(n: nat) returns (steps: nat)
  ensures steps == n
{
  var i := n;
  steps := 0;
  var go := i > 0;
  while go
    invariant 0 <= i <= n
    invariant steps == n - i
    invariant go == (i > 0)
    decreases i
  {
    i := i - 1;
    steps := steps + 1;
    go := i > 0;
  }
}
