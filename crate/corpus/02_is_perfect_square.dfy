method IsPerfectSquare(n: nat) returns (result: bool)
  ensures result == (exists k: nat :: k * k == n)
{
  var k: nat := 0;
  result := false;
  while k * k <= n
    invariant 0 <= k <= n + 1
    invariant forall i: nat :: 0 <= i < k ==> i * i != n
    invariant result == (exists i: nat :: 0 <= i < k && i * i == n)
  {
    if k * k == n {
      result := true;
      return;
    }
    k := k + 1;
  }
  assert forall i: nat :: 0 <= i < k ==> i * i != n;
}
